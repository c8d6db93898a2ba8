#pragma once

#include "fdtlab/assumptions.hpp"
#include "fdtlab/diagnostics.hpp"
#include "fdtlab/ensemble.hpp"
#include "fdtlab/error.hpp"
#include "fdtlab/gap_probe.hpp"
#include "fdtlab/integrator.hpp"
#include "fdtlab/lyapunov.hpp"
#include "fdtlab/markov_testbed.hpp"
#include "fdtlab/observable.hpp"
#include "fdtlab/parallel.hpp"
#include "fdtlab/poly_system.hpp"
#include "fdtlab/presets.hpp"
#include "fdtlab/response.hpp"
#include "fdtlab/rng.hpp"
#include "fdtlab/statistics.hpp"
#include "fdtlab/sym_multimap.hpp"
#include "fdtlab/version.hpp"
