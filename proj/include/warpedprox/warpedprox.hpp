#pragma once

#include "warpedprox/error.hpp"
#include "warpedprox/space.hpp"
#include "warpedprox/operators.hpp"
#include "warpedprox/catalog.hpp"
#include "warpedprox/backward_map.hpp"
#include "warpedprox/kernels.hpp"
#include "warpedprox/fejer.hpp"
#include "warpedprox/policy.hpp"
#include "warpedprox/solvers.hpp"
#include "warpedprox/coupled.hpp"
#include "warpedprox/testbed.hpp"
