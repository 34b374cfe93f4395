#pragma once

#include "propfit/errors.hpp"
#include "propfit/linalg.hpp"
#include "propfit/model.hpp"
#include "propfit/jacobian.hpp"
#include "propfit/estimators.hpp"
#include "propfit/asymptotics.hpp"
#include "propfit/equivalent_dose.hpp"
#include "propfit/simulation.hpp"
#include "propfit/check.hpp"
