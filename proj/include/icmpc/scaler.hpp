#pragma once

#include "icmpc/types.hpp"

namespace icmpc {

/// Per-dimension min-max transform onto [-1, 1].
///
/// forward(v) = (v - offset) / scale with offset = (lo+hi)/2, scale = (hi-lo)/2.
/// fit_symmetric() pins lo = -hi so that offset == 0 and the origin maps to the
/// origin; the control pipeline relies on that (non-negative surrogate outputs
/// stay non-negative after unscaling, and the quadratic objective keeps its
/// structure under the change of variables).
struct MinMaxScaler {
    Vec lo;
    Vec hi;

    MinMaxScaler() = default;
    MinMaxScaler(Vec l, Vec h) : lo(std::move(l)), hi(std::move(h))
    {
        if (lo.size() != hi.size()) throw std::invalid_argument("MinMaxScaler: lo/hi size mismatch");
        if (!(lo.array() < hi.array()).all())
            throw std::invalid_argument("MinMaxScaler: requires lo < hi per dimension");
    }

    static MinMaxScaler fit(const Mat& rows)
    {
        return MinMaxScaler(rows.colwise().minCoeff(), rows.colwise().maxCoeff());
    }

    /// Symmetric hull of the data: lo = -H, hi = +H with H = max(|data|, floor).
    static MinMaxScaler fit_symmetric(const Mat& rows, double floor = 1e-12)
    {
        Vec h = rows.cwiseAbs().colwise().maxCoeff().cwiseMax(floor);
        return MinMaxScaler(-h, h);
    }

    static MinMaxScaler from_box(const Box& box) { return MinMaxScaler(box.lo, box.hi); }

    int dim() const { return static_cast<int>(lo.size()); }

    Vec offset() const { return 0.5 * (lo + hi); }
    Vec scale() const { return 0.5 * (hi - lo); }

    Vec forward(const Vec& v) const { return (v - offset()).cwiseQuotient(scale()); }
    Vec inverse(const Vec& s) const { return offset() + s.cwiseProduct(scale()); }

    Mat forward_rows(const Mat& rows) const
    {
        Mat out = rows;
        out.rowwise() -= offset().transpose();
        out.array().rowwise() /= scale().transpose().array();
        return out;
    }

    Mat inverse_rows(const Mat& rows) const
    {
        Mat out = rows;
        out.array().rowwise() *= scale().transpose().array();
        out.rowwise() += offset().transpose();
        return out;
    }

    bool is_symmetric(double tol = 1e-12) const
    {
        return offset().cwiseAbs().maxCoeff() <= tol;
    }

    /// Concatenate two scalers dimension-wise.
    static MinMaxScaler concat(const MinMaxScaler& a, const MinMaxScaler& b)
    {
        Vec lo(a.dim() + b.dim()), hi(a.dim() + b.dim());
        lo << a.lo, b.lo;
        hi << a.hi, b.hi;
        return MinMaxScaler(std::move(lo), std::move(hi));
    }
};

} // namespace icmpc
