#ifndef HIERSR_HIERSR_HPP
#define HIERSR_HIERSR_HPP

#include "hiersr/error.hpp"
#include "hiersr/hier_sr.hpp"
#include "hiersr/io.hpp"
#include "hiersr/metrics.hpp"
#include "hiersr/model_backend.hpp"
#include "hiersr/model_protocol.hpp"
#include "hiersr/resample.hpp"
#include "hiersr/sr_octree.hpp"
#include "hiersr/volume.hpp"

#endif
