#pragma once

#include "gradenav/config.hpp"
#include "gradenav/csv.hpp"
#include "gradenav/dp_planner.hpp"
#include "gradenav/ekf.hpp"
#include "gradenav/errors.hpp"
#include "gradenav/grade_map.hpp"
#include "gradenav/harness.hpp"
#include "gradenav/mpc.hpp"
#include "gradenav/sensor_sim.hpp"
#include "gradenav/vehicle.hpp"
