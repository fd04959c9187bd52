#ifndef GPKRYLOV_GPKRYLOV_HPP
#define GPKRYLOV_GPKRYLOV_HPP

#include "gpkrylov/common.hpp"
#include "gpkrylov/csv.hpp"
#include "gpkrylov/dataset.hpp"
#include "gpkrylov/experiment_config.hpp"
#include "gpkrylov/experiments.hpp"
#include "gpkrylov/gp_likelihood.hpp"
#include "gpkrylov/kernels.hpp"
#include "gpkrylov/krylov.hpp"
#include "gpkrylov/optimizer.hpp"
#include "gpkrylov/oracle.hpp"
#include "gpkrylov/preconditioners.hpp"
#include "gpkrylov/trace_estimation.hpp"

#endif
