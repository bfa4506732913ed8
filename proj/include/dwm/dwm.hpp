// Umbrella header for the dynamic-watermarking toolkit.
#pragma once

#include "dwm/adversary.hpp"
#include "dwm/detect.hpp"
#include "dwm/harness.hpp"
#include "dwm/linsys.hpp"
#include "dwm/random.hpp"
#include "dwm/residual.hpp"
#include "dwm/scenario.hpp"
#include "dwm/series.hpp"
#include "dwm/trace.hpp"
#include "dwm/watermark.hpp"
