#pragma once

#include <stdexcept>
#include <string>

namespace poe {

/// Invalid user input: bad config values, shape mismatches, missing files.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid observation data (non-finite entries and the like).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Queue load at or above capacity.
class UnstableQueueError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

/// Gamma density with shape < 1 evaluated at the origin.
class SingularityError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// E-step found an observation with zero density under every latent state.
class DegenerateSupportError : public std::runtime_error {
public:
  DegenerateSupportError(std::size_t link, std::size_t round)
      : std::runtime_error("zero joint density at link " + std::to_string(link) +
                           ", round " + std::to_string(round)),
        link_(link), round_(round) {}
  std::size_t link() const { return link_; }
  std::size_t round() const { return round_; }

private:
  std::size_t link_;
  std::size_t round_;
};

/// Fusion integrand vanishes on the whole quadrature grid for one link.
class SupportMismatchError : public std::runtime_error {
public:
  SupportMismatchError(std::size_t link, const std::string& what)
      : std::runtime_error("support mismatch on link " + std::to_string(link) + ": " + what),
        link_(link) {}
  std::size_t link() const { return link_; }

private:
  std::size_t link_;
};

/// All quadrature weights underflowed.
class NumericalSupportError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Every link is attacked, nothing left to fuse.
class NoCleanLinkError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

}  // namespace poe
