#pragma once

#include "ropefreq/attention.hpp"
#include "ropefreq/bands.hpp"
#include "ropefreq/diagnostics.hpp"
#include "ropefreq/errors.hpp"
#include "ropefreq/experiment.hpp"
#include "ropefreq/json_io.hpp"
#include "ropefreq/matrix.hpp"
#include "ropefreq/rope.hpp"
#include "ropefreq/sharing.hpp"
#include "ropefreq/synthetic.hpp"
