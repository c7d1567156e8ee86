#pragma once

#include "mecnoma/types.hpp"
#include "mecnoma/linalg.hpp"
#include "mecnoma/model.hpp"
#include "mecnoma/closed_form.hpp"
#include "mecnoma/convex_core.hpp"
#include "mecnoma/barrier.hpp"
#include "mecnoma/surrogate.hpp"
#include "mecnoma/precoding.hpp"
#include "mecnoma/optimizer.hpp"
#include "mecnoma/channels.hpp"
#include "mecnoma/config.hpp"
#include "mecnoma/runner.hpp"
#include "mecnoma/oracle.hpp"
