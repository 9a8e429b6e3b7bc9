#pragma once

#include "stgc/alignment.hpp"
#include "stgc/config.hpp"
#include "stgc/data_model.hpp"
#include "stgc/error.hpp"
#include "stgc/evaluation.hpp"
#include "stgc/f_distribution.hpp"
#include "stgc/granger.hpp"
#include "stgc/graph_builder.hpp"
#include "stgc/lag_engine.hpp"
#include "stgc/parallel.hpp"
#include "stgc/pipeline.hpp"
#include "stgc/predictor.hpp"
#include "stgc/random.hpp"
#include "stgc/synthetic.hpp"
