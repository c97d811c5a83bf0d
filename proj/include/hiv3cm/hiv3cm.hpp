#ifndef HIV3CM_HIV3CM_HPP_
#define HIV3CM_HIV3CM_HPP_

#include "hiv3cm/cubic.hpp"
#include "hiv3cm/integrator.hpp"
#include "hiv3cm/io.hpp"
#include "hiv3cm/model.hpp"
#include "hiv3cm/montecarlo.hpp"
#include "hiv3cm/stochastic.hpp"

namespace hiv3cm
{
inline constexpr const char* version = "1.0.0";
}

#endif // HIV3CM_HIV3CM_HPP_
