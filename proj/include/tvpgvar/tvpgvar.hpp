#pragma once

#include "tvpgvar/core.hpp"
#include "tvpgvar/io.hpp"
#include "tvpgvar/ingest.hpp"
#include "tvpgvar/weights.hpp"
#include "tvpgvar/gvar.hpp"
#include "tvpgvar/matrix_calculus.hpp"
#include "tvpgvar/irf.hpp"
#include "tvpgvar/tvp.hpp"
#include "tvpgvar/lasso.hpp"
#include "tvpgvar/forecast.hpp"
#include "tvpgvar/config.hpp"
#include "tvpgvar/pipeline.hpp"
