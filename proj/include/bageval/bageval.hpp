#pragma once

#include "bageval/error.hpp"
#include "bageval/random.hpp"
#include "bageval/csv.hpp"
#include "bageval/cohort.hpp"
#include "bageval/features.hpp"
#include "bageval/matching.hpp"
#include "bageval/classifiers.hpp"
#include "bageval/evaluation.hpp"
#include "bageval/survival.hpp"
#include "bageval/simulator.hpp"
#include "bageval/report.hpp"
#include "bageval/pipeline.hpp"
