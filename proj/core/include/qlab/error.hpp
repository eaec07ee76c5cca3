#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qlab {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Input rejected at a module boundary (non-finite amplitude, misaligned state,
// malformed gate wiring, ...).
class InvalidInput : public Error {
  public:
    using Error::Error;
};

// A parameter violates the invariant of its parameter type.
class InvalidParameter : public Error {
  public:
    using Error::Error;
};

// Base for failures raised while integrating; carries the last good state.
class NumericalFailure : public Error {
  public:
    NumericalFailure(const std::string& what, double t, std::vector<double> last_state)
        : Error(what), t_(t), last_state_(std::move(last_state)) {}

    double time() const noexcept { return t_; }
    const std::vector<double>& last_state() const noexcept { return last_state_; }

  private:
    double t_;
    std::vector<double> last_state_;
};

// Step size fell below h_min.
class StiffnessFailure : public NumericalFailure {
  public:
    using NumericalFailure::NumericalFailure;
};

// The state became non-finite.
class Divergence : public NumericalFailure {
  public:
    using NumericalFailure::NumericalFailure;
};

class EventNotFound : public Error {
  public:
    EventNotFound(const std::string& what, double budget) : Error(what), budget_(budget) {}
    double budget() const noexcept { return budget_; }

  private:
    double budget_;
};

// A stage of the truncated blowup construction did not reach its threshold.
class StageFailure : public Error {
  public:
    StageFailure(const std::string& what, int stage) : Error(what), stage_(stage) {}
    int stage() const noexcept { return stage_; }

  private:
    int stage_;
};

// A windowed run wanted to grow past its scale cap.
class WindowExhausted : public Error {
  public:
    WindowExhausted(const std::string& what, int cap) : Error(what), cap_(cap) {}
    int cap() const noexcept { return cap_; }

  private:
    int cap_;
};

// Trajectory does not have the (component, scale) layout an analysis needs.
class ShapeError : public Error {
  public:
    using Error::Error;
};

}  // namespace qlab
