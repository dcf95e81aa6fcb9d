#pragma once

#include "rfk/checkpoint.hpp"
#include "rfk/encoding.hpp"
#include "rfk/field.hpp"
#include "rfk/geometry.hpp"
#include "rfk/image.hpp"
#include "rfk/metrics.hpp"
#include "rfk/network.hpp"
#include "rfk/parallel.hpp"
#include "rfk/render.hpp"
#include "rfk/rng.hpp"
#include "rfk/scene.hpp"
#include "rfk/trainer.hpp"
#include "rfk/volume.hpp"
