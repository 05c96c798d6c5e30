#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace cate {

//! Base class for all library errors.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! Kernel mass at a query point is below the denominator floor.
//!
//! `index()` identifies the offending observation (first-stage smoothers) or
//! grid point (second-step smoother) when the caller knows it.
class DegenerateMass : public Error
{
public:
  explicit DegenerateMass(const std::string& what,
                          std::optional<std::size_t> index = std::nullopt)
    : Error(what)
    , index_(index)
  {}

  std::optional<std::size_t> index() const { return index_; }

private:
  std::optional<std::size_t> index_;
};

class RankDeficient : public Error
{
public:
  using Error::Error;
};

class UnsupportedRank : public Error
{
public:
  using Error::Error;
};

//! Logistic likelihood has no finite maximiser (complete or quasi-complete
//! separation).
class Separation : public Error
{
public:
  using Error::Error;
};

class MaxIterations : public Error
{
public:
  using Error::Error;
};

class QuadratureError : public Error
{
public:
  using Error::Error;
};

//! A conditional sampler returned rows inconsistent with the conditioning
//! value.
class SamplerMismatch : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

class DataError : public Error
{
public:
  using Error::Error;
};

} // namespace cate
