#pragma once

#include "levyconv/errors.hpp"
#include "levyconv/numeric.hpp"
#include "levyconv/levy_basis.hpp"
#include "levyconv/hypograph.hpp"
#include "levyconv/simulator.hpp"
#include "levyconv/tail.hpp"
#include "levyconv/inference.hpp"
#include "levyconv/io.hpp"
