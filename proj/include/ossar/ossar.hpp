#pragma once

#include "ossar/config.hpp"
#include "ossar/data.hpp"
#include "ossar/errors.hpp"
#include "ossar/eval.hpp"
#include "ossar/gradcheck.hpp"
#include "ossar/losses.hpp"
#include "ossar/model.hpp"
#include "ossar/numerics.hpp"
#include "ossar/train.hpp"
