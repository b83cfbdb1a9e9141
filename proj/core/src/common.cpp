#include "pdt/common.hpp"

#include <iostream>

namespace pdt {

WarnFn& warning_handler() {
  static WarnFn handler = [](const std::string& message) {
    std::cerr << "warning: " << message << '\n';
  };
  return handler;
}

void warn(const std::string& message) {
  if (warning_handler()) warning_handler()(message);
}

}  // namespace pdt
