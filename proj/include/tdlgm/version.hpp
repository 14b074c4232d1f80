#pragma once

#define TDLGM_VERSION "1.0.0"
