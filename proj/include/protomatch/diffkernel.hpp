#pragma once

#include "protomatch/diffkernel/checkpoint.hpp"
#include "protomatch/diffkernel/gradcheck.hpp"
#include "protomatch/diffkernel/mlp.hpp"
#include "protomatch/diffkernel/ops.hpp"
#include "protomatch/diffkernel/params.hpp"
#include "protomatch/diffkernel/rmsprop.hpp"
#include "protomatch/diffkernel/tape.hpp"
