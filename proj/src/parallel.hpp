#pragma once

#include <exception>

namespace poe::detail {

/// Holds the first exception thrown inside an OpenMP region so it can be rethrown
/// from the serial code that follows.
class ExceptionSlot {
public:
  template <class Fn>
  void run(Fn&& fn) noexcept {
    try {
      fn();
    } catch (...) {
#pragma omp critical(poe_exception_slot)
      if (!ptr_) ptr_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (ptr_) std::rethrow_exception(ptr_);
  }

private:
  std::exception_ptr ptr_;
};

}  // namespace poe::detail
