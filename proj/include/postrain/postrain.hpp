#pragma once

// Umbrella header: the whole library.

#include "postrain/common.hpp"
#include "postrain/rng.hpp"
#include "postrain/sha256.hpp"
#include "postrain/tensor.hpp"

#include "postrain/dataio.hpp"
#include "postrain/prb.hpp"
#include "postrain/synthetic.hpp"
#include "postrain/verification.hpp"

#include "postrain/nn/backbone.hpp"
#include "postrain/nn/cam.hpp"
#include "postrain/nn/convlstm.hpp"
#include "postrain/nn/gradcheck.hpp"
#include "postrain/nn/layers.hpp"
#include "postrain/nn/model.hpp"
#include "postrain/nn/multitask.hpp"
#include "postrain/nn/swin.hpp"
#include "postrain/nn/unet.hpp"

#include "postrain/ablation.hpp"
#include "postrain/bmp.hpp"
#include "postrain/checkpoint.hpp"
#include "postrain/config.hpp"
#include "postrain/report.hpp"
#include "postrain/trainer.hpp"
