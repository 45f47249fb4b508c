#pragma once

#include "config.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "io.hpp"
#include "kg.hpp"
#include "matrix.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "synth.hpp"
#include "training.hpp"
