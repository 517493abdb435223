// SPDX-License-Identifier: Apache-2.0

/// \file surfsplat.hpp
/// \brief Umbrella header.

#pragma once

#include "surfsplat/core.hpp"
#include "surfsplat/io.hpp"
#include "surfsplat/lift.hpp"
#include "surfsplat/metrics.hpp"
#include "surfsplat/render.hpp"
#include "surfsplat/sh.hpp"
#include "surfsplat/synth.hpp"
