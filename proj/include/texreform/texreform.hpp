#pragma once

#include "texreform/architecture.hpp"
#include "texreform/codec.hpp"
#include "texreform/enhancement.hpp"
#include "texreform/error.hpp"
#include "texreform/imaging.hpp"
#include "texreform/metrics.hpp"
#include "texreform/pipeline.hpp"
#include "texreform/tensor.hpp"
#include "texreform/vstr.hpp"
#include "texreform/weights.hpp"
