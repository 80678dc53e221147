#pragma once

// Umbrella header: semi-parametric proportional hazards estimation for
// partly interval-censored survival data by constrained maximum penalized
// likelihood.

#include "survmpl/basis.hpp"
#include "survmpl/data.hpp"
#include "survmpl/inference.hpp"
#include "survmpl/likelihood.hpp"
#include "survmpl/optimizer.hpp"
#include "survmpl/rng.hpp"
#include "survmpl/simulator.hpp"
#include "survmpl/smoothing.hpp"
