#pragma once

#include "shapeopt/bench.hpp"
#include "shapeopt/mesh_io.hpp"
#include "shapeopt/optimizer.hpp"
