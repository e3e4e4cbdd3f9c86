#ifndef SEBA_SEBA_HPP
#define SEBA_SEBA_HPP

/**
 * @file seba.hpp
 *
 * @brief Umbrella header for the whole library.
 */

#include "analysis.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "fewshot.hpp"
#include "linalg.hpp"
#include "neighbors.hpp"
#include "nncore.hpp"
#include "preprocess.hpp"
#include "pretrain.hpp"
#include "rng.hpp"
#include "synthetic.hpp"
#include "theory.hpp"

#endif
