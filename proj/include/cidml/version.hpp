#pragma once

namespace cidml {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr const char* kReportSchemaVersion = "1";

}  // namespace cidml
