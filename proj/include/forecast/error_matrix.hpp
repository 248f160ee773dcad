#ifndef FORECAST_ERROR_MATRIX_HPP
#define FORECAST_ERROR_MATRIX_HPP

#include <string>

#include "forecast/matrix.hpp"

namespace forecast {

// Which experiment a d x d error matrix belongs to: rows are layers (layer
// selection) or input channels (the cross-channel grid). Kept explicit so
// the two kinds can never be confused.
enum class RowSemantics { Layer, InputChannel };

enum class SplitLabel { Train, Validation, Test };

struct ErrorMatrix {
    Matrix values;  // square
    RowSemantics row_semantics = RowSemantics::Layer;
    SplitLabel split = SplitLabel::Validation;
};

std::string to_string(RowSemantics s);
std::string to_string(SplitLabel s);

} // namespace forecast

#endif // FORECAST_ERROR_MATRIX_HPP
