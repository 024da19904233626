#pragma once

// Umbrella header for the whole library.

#include "bpn/anchor.hpp"
#include "bpn/checkpoint.hpp"
#include "bpn/config.hpp"
#include "bpn/continual.hpp"
#include "bpn/data.hpp"
#include "bpn/error.hpp"
#include "bpn/ewc.hpp"
#include "bpn/gradcheck.hpp"
#include "bpn/layer.hpp"
#include "bpn/loss.hpp"
#include "bpn/matrix.hpp"
#include "bpn/memory.hpp"
#include "bpn/metrics.hpp"
#include "bpn/network.hpp"
#include "bpn/rng.hpp"
#include "bpn/runner.hpp"
