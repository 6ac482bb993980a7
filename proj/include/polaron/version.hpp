#pragma once

#define POLARON_VERSION "0.1.0"

namespace polaron {
inline const char* version() { return POLARON_VERSION; }
}
