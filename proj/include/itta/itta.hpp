#pragma once

#include "itta/active.hpp"
#include "itta/core.hpp"
#include "itta/dataset.hpp"
#include "itta/errors.hpp"
#include "itta/metrics.hpp"
#include "itta/rng.hpp"
#include "itta/runner.hpp"
#include "itta/tta.hpp"
