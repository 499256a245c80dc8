#pragma once

#include "semsearch/builtin_library.hpp"
#include "semsearch/core.hpp"
#include "semsearch/generator.hpp"
#include "semsearch/geometry.hpp"
#include "semsearch/grid.hpp"
#include "semsearch/harness.hpp"
#include "semsearch/mapping.hpp"
#include "semsearch/planner.hpp"
#include "semsearch/semantics.hpp"
#include "semsearch/world.hpp"
