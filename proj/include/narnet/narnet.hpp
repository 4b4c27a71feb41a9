#pragma once

#include "narnet/errors.hpp"
#include "narnet/rng.hpp"
#include "narnet/nar_model.hpp"
#include "narnet/panel.hpp"
#include "narnet/simulation.hpp"
#include "narnet/error_covariance.hpp"
#include "narnet/estimation.hpp"
#include "narnet/inference.hpp"
#include "narnet/harness.hpp"
#include "narnet/io.hpp"
