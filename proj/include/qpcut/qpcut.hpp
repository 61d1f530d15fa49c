#pragma once

#include "qpcut/cutloop.hpp"
#include "qpcut/envelopes.hpp"
#include "qpcut/instances.hpp"
#include "qpcut/master.hpp"
#include "qpcut/projlp.hpp"
#include "qpcut/rng.hpp"
#include "qpcut/separation.hpp"
#include "qpcut/sym_matrix.hpp"
