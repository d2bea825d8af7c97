#pragma once

#include "soft_tue/error.hpp"
#include "soft_tue/events.hpp"
#include "soft_tue/fuzz.hpp"
#include "soft_tue/json_util.hpp"
#include "soft_tue/mutation.hpp"
#include "soft_tue/prng.hpp"
#include "soft_tue/protocol.hpp"
#include "soft_tue/ran_sim.hpp"
#include "soft_tue/report.hpp"
#include "soft_tue/service.hpp"
#include "soft_tue/telemetry.hpp"
#include "soft_tue/tester_ue.hpp"
