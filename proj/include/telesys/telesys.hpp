#pragma once

#include <telesys/dataio.hpp>
#include <telesys/estimator.hpp>
#include <telesys/metrics.hpp>
#include <telesys/netsim.hpp>
#include <telesys/pipeline.hpp>
#include <telesys/rng.hpp>
#include <telesys/sysid.hpp>
#include <telesys/synthetic.hpp>
#include <telesys/types.hpp>
