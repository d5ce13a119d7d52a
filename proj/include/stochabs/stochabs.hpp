/*
 * stochabs.hpp - umbrella header
 */

#ifndef STOCHABS_STOCHABS_HPP_
#define STOCHABS_STOCHABS_HPP_

#include "abstraction.hpp"
#include "bisim.hpp"
#include "certify.hpp"
#include "cmpfun.hpp"
#include "expr.hpp"
#include "flow.hpp"
#include "grid.hpp"
#include "mcvalidate.hpp"
#include "netcomp.hpp"
#include "parallel.hpp"
#include "system.hpp"

#endif /* STOCHABS_STOCHABS_HPP_ */
