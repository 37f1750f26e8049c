#pragma once

#include "oracle_data.hpp"

#include <spvar/spvar.hpp>

#include <gtest/gtest.h>

#include <string>
#include <vector>

namespace testing_util {

inline spvar::Matrix row_major(const std::vector<double>& v, spvar::Index rows, spvar::Index cols)
{
    spvar::Matrix m(rows, cols);
    for (spvar::Index r = 0; r < rows; ++r)
        for (spvar::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
    return m;
}

inline spvar::TimeSeriesPanel oracle_panel()
{
    return spvar::TimeSeriesPanel(row_major(oracle::panel, oracle::panel_T, oracle::panel_k));
}

/// Collects warnings for the lifetime of the object.
class WarningCapture
{
public:
    WarningCapture()
    {
        spvar::set_warning_sink([this](const std::string& m) { messages.push_back(m); });
    }
    ~WarningCapture()
    {
        spvar::set_warning_sink([](const std::string& m) { std::fprintf(stderr, "warning: %s\n", m.c_str()); });
    }
    std::vector<std::string> messages;
};

inline spvar::SpatialLayout line_layout(spvar::Index k, double spacing = 1.0)
{
    spvar::Matrix p(k, 2);
    for (spvar::Index i = 0; i < k; ++i) p.row(i) << spacing * static_cast<double>(i), 0.0;
    return spvar::SpatialLayout(p, spvar::Metric::euclidean);
}

} // namespace testing_util
