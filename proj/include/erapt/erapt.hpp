#pragma once

#include "erapt/attack.hpp"
#include "erapt/config.hpp"
#include "erapt/dataio.hpp"
#include "erapt/error.hpp"
#include "erapt/evaluation.hpp"
#include "erapt/evolution.hpp"
#include "erapt/losses.hpp"
#include "erapt/model.hpp"
#include "erapt/model_io.hpp"
#include "erapt/numcore.hpp"
#include "erapt/trainer.hpp"
