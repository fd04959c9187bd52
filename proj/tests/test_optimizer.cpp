#include <catch2/catch_amalgamated.hpp>

#include "gpkrylov/gpkrylov.hpp"
#include "support.hpp"
