#pragma once

#include "splicequant/distributions.hpp"
#include "splicequant/error.hpp"
#include "splicequant/genome_model.hpp"
#include "splicequant/inference.hpp"
#include "splicequant/parallel.hpp"
#include "splicequant/path_prob.hpp"
#include "splicequant/pathing.hpp"
#include "splicequant/quantify.hpp"
#include "splicequant/simulate.hpp"
#include "splicequant/tsv.hpp"
