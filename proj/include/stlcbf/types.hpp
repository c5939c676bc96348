#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace stlcbf {

using State = Eigen::VectorXd;
using Input = Eigen::VectorXd;

/// Half-open time interval [start, end) in seconds.
struct TimeInterval {
    double start = 0.0;
    double end = 0.0;

    static TimeInterval make(double start, double end);

    bool contains(double t) const { return t >= start && t < end; }
    bool overlaps(const TimeInterval& o) const { return start < o.end && o.start < end; }
    double length() const { return end - start; }
    bool operator==(const TimeInterval&) const = default;
};

/// Axis-aligned box in state (or input) space.
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Eigen::Index dim() const { return lower.size(); }
    bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
    bool degenerate() const;
};

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace stlcbf
