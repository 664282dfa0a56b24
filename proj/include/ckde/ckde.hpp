#pragma once

#include "ckde/error.hpp"
#include "ckde/parallel.hpp"
#include "ckde/random.hpp"
#include "ckde/hermite.hpp"
#include "ckde/measures.hpp"
#include "ckde/freeconv.hpp"
#include "ckde/distribution.hpp"
#include "ckde/gauss_cov.hpp"
#include "ckde/network.hpp"
#include "ckde/detequiv.hpp"
#include "ckde/netsim.hpp"
#include "ckde/config.hpp"
#include "ckde/report.hpp"
#include "ckde/experiments.hpp"
