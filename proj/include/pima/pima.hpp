#pragma once

#include "pima/enumeration.hpp"
#include "pima/harness.hpp"
#include "pima/metrics.hpp"
#include "pima/protocols.hpp"
#include "pima/rng.hpp"
#include "pima/scheduling.hpp"
#include "pima/traffic.hpp"
