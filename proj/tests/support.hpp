#pragma once

#include <optional>

#include "freegauss/error.hpp"

// Kind of the freegauss::Error thrown by f, or nullopt when it returns normally.
template <class F>
std::optional<freegauss::ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const freegauss::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

#define CHECK_ERROR_KIND(expr, kind_) CHECK(error_kind([&] { (void)(expr); }) == freegauss::ErrorKind::kind_)
