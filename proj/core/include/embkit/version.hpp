#pragma once

#define EMBKIT_VERSION "0.1.0"
