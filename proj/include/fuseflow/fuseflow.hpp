#pragma once

#include "fuseflow/core.hpp"
#include "fuseflow/descriptors.hpp"
#include "fuseflow/edges.hpp"
#include "fuseflow/evaluation.hpp"
#include "fuseflow/field_io.hpp"
#include "fuseflow/filtering.hpp"
#include "fuseflow/geodesic.hpp"
#include "fuseflow/grid.hpp"
#include "fuseflow/interpolation.hpp"
#include "fuseflow/kitti_io.hpp"
#include "fuseflow/matching.hpp"
#include "fuseflow/pipeline.hpp"
#include "fuseflow/png_io.hpp"
#include "fuseflow/sgm.hpp"
#include "fuseflow/superpixels.hpp"
