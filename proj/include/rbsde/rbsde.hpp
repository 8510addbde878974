#pragma once

// Everything except the JSON layer (rbsde/io.hpp needs nlohmann_json).

#include "rbsde/driver.hpp"
#include "rbsde/engine.hpp"
#include "rbsde/errors.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/local_global.hpp"
#include "rbsde/reflected.hpp"
#include "rbsde/regulated.hpp"
#include "rbsde/tolerances.hpp"
#include "rbsde/verification.hpp"
