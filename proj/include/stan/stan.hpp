#pragma once

#include "stan/error.hpp"
#include "stan/binary_io.hpp"
#include "stan/audio.hpp"
#include "stan/features.hpp"
#include "stan/vad.hpp"
#include "stan/pitch.hpp"
#include "stan/phones.hpp"
#include "stan/speaker.hpp"
#include "stan/events.hpp"
#include "stan/config.hpp"
#include "stan/pipeline.hpp"
#include "stan/store.hpp"
#include "stan/service.hpp"
