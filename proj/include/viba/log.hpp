#pragma once

#include <functional>
#include <string>
#include <vector>

namespace viba {

// Warnings go to stderr unless a sink is installed (tests capture them).
using WarningSink = std::function<void(const std::string&)>;

void warn(const std::string& message);

// Installs `sink` and returns the previous one. An empty sink restores stderr.
WarningSink set_warning_sink(WarningSink sink);

// RAII capture of warnings for the lifetime of the object.
class ScopedWarningCapture {
 public:
  ScopedWarningCapture();
  ~ScopedWarningCapture();
  ScopedWarningCapture(const ScopedWarningCapture&) = delete;
  ScopedWarningCapture& operator=(const ScopedWarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }

 private:
  std::vector<std::string> messages_;
  WarningSink previous_;
};

}  // namespace viba
