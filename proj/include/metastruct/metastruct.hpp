#pragma once

#include "metastruct/corruption.hpp"
#include "metastruct/ems.hpp"
#include "metastruct/fixtures.hpp"
#include "metastruct/igtt.hpp"
#include "metastruct/image.hpp"
#include "metastruct/io.hpp"
#include "metastruct/label_model.hpp"
#include "metastruct/losses.hpp"
#include "metastruct/metrics.hpp"
#include "metastruct/morphology.hpp"
#include "metastruct/rng.hpp"
#include "metastruct/sdd.hpp"
