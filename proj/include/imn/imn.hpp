#pragma once

#include "imn/config.hpp"
#include "imn/coupling.hpp"
#include "imn/dataset.hpp"
#include "imn/error.hpp"
#include "imn/grad_check.hpp"
#include "imn/image_io.hpp"
#include "imn/losses.hpp"
#include "imn/metrics.hpp"
#include "imn/network.hpp"
#include "imn/optim.hpp"
#include "imn/serialization.hpp"
#include "imn/synthetic.hpp"
#include "imn/tensor.hpp"
#include "imn/trainer.hpp"
#include "imn/wavelet.hpp"
