#pragma once

// Convenience umbrella for the whole library.

#include "anny/asset.hpp"
#include "anny/bundle_io.hpp"
#include "anny/bvh.hpp"
#include "anny/collision.hpp"
#include "anny/core.hpp"
#include "anny/fitting.hpp"
#include "anny/geometry.hpp"
#include "anny/mesh_io.hpp"
#include "anny/pose.hpp"
#include "anny/regressor.hpp"
#include "anny/rotation.hpp"
#include "anny/shape.hpp"
#include "anny/stats.hpp"
#include "anny/toy.hpp"
