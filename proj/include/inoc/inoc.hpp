#pragma once

// Umbrella header: the whole library in one include.

#include "inoc/errors.hpp"
#include "inoc/rng.hpp"
#include "inoc/corpus.hpp"
#include "inoc/theory.hpp"
#include "inoc/modelgw.hpp"
#include "inoc/evalkit.hpp"
#include "inoc/selector.hpp"
#include "inoc/toylab.hpp"
