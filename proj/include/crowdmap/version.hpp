#pragma once

namespace crowdmap {

inline constexpr const char* kArtifactName = "crowdmap";
inline constexpr const char* kArtifactVersion = "0.1.0";

}  // namespace crowdmap
