#ifndef SYMPTOMCAST_GRIDDER_HPP
#define SYMPTOMCAST_GRIDDER_HPP

#include "symptomcast/nn/loss.hpp"
#include "symptomcast/nn/tensor.hpp"
#include "symptomcast/profiles.hpp"
#include "symptomcast/survey.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace symptomcast {

using nn::Index;
using nn::Mask;
using nn::TensorXd;

// Origin at (x_min, y_min); row follows y, column follows x; cells are
// row-major and the upper bounds are clamped into the last row/column.
struct GridSpec {
    Index rows = 20;
    Index cols = 20;
    Bounds2d bounds{};

    void validate() const; // throws ConfigError
    Index cells() const { return rows * cols; }
    double cell_height() const { return (bounds.y_max - bounds.y_min) / static_cast<double>(rows); }
    double cell_width() const { return (bounds.x_max - bounds.x_min) / static_cast<double>(cols); }
    // Cell of a point; empty when the point lies outside the bounds.
    std::optional<std::pair<Index, Index>> cell_of(double x, double y) const;
    std::pair<double, double> cell_center(Index row, Index col) const; // (x, y)
};

struct Binning {
    std::vector<std::vector<std::size_t>> cells; // rows*cols lists of record indices
    std::vector<std::size_t> rejected;           // indices outside the bounds
    std::vector<std::string> errors;             // one message per rejected record

    std::size_t binned() const;
};

// Bins the records dated `day` (all records when day is nullopt).
Binning bin_records(const std::vector<SurveyRecord>& records, const GridSpec& spec, std::optional<int> day);

enum class Interpolation { nearest, inverse_distance };

// Fills every unobserved cell of a C x H x W grid from the observed cells.
// Nearest mode copies the closest observed cell centre (Euclidean, scaled by
// the cell aspect), ties to the smallest (row, col). Throws DataError when
// nothing is observed.
TensorXd interpolate_empty_cells(const TensorXd& grid, const Mask& observed,
                                 Interpolation mode = Interpolation::nearest, double cell_height = 1.0,
                                 double cell_width = 1.0);

struct DayTensor {
    int day = 0;
    TensorXd values; // C x H x W
    Mask observed;   // H x W, true where at least one record was binned
};

struct LabelGrid {
    int day = 0;
    TensorXd sra; // H x W mean SRA of observed cells, 0 elsewhere
    Mask observed;
};

DayTensor rasterize_day(const std::vector<SurveyRecord>& records, const GridSpec& spec, const ProfileModel& model,
                        int day, Interpolation mode = Interpolation::nearest);
LabelGrid label_day(const std::vector<SurveyRecord>& records, const GridSpec& spec, int day);

struct GriddedDataset {
    GridSpec spec;
    std::vector<DayTensor> days; // ascending by day; days without records are dropped
    std::vector<LabelGrid> labels;
    std::vector<int> dropped_days;
    std::size_t binned_records = 0;
};

// Rasterizes every day in [first_day, last_day] present in `records`.
GriddedDataset build_dataset(const std::vector<SurveyRecord>& records, const GridSpec& spec,
                             const ProfileModel& model, Interpolation mode = Interpolation::nearest);

struct WindowSample {
    TensorXd input; // C x T x H x W, oldest day first
    TensorXd label; // H x W
    Mask label_mask;
    int target_date = 0;
    std::vector<int> input_dates;
    Index row0 = 0; // patch origin inside the full grid
    Index col0 = 0;
};

// Stride-1 sliding windows: days [t, t+n) as input and day t+n+k-1 as label.
// Windows whose days are not all present, or whose label mask is empty, are
// skipped.
std::vector<WindowSample> build_windows(const GriddedDataset& data, int input_days, int horizon);

// Input window for forecasting `target`, which need not have data itself.
// The label is taken from the data when present, else left empty (all-false
// mask). Missing input days throw DataError.
WindowSample forecast_window(const GriddedDataset& data, int target, int input_days, int horizon);

struct PatchGrid {
    std::vector<Index> row_starts;
    std::vector<Index> col_starts;
};

// Regular starts at multiples of the stride plus an edge-aligned start so
// every pixel is covered.
PatchGrid patch_grid(Index rows, Index cols, Index patch_rows, Index patch_cols, Index stride_rows,
                     Index stride_cols);

std::vector<WindowSample> extract_patches(const WindowSample& sample, Index patch_rows, Index patch_cols,
                                          Index stride_rows, Index stride_cols);

struct Resolution {
    Index rows = 1;
    Index cols = 1;
};

std::vector<GriddedDataset> regrid(const std::vector<SurveyRecord>& records, const std::vector<Resolution>& resolutions,
                                   const Bounds2d& bounds, const ProfileModel& model);

// Per-channel z-normalization of window inputs.
struct ChannelNorm {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;

    static ChannelNorm fit(const GriddedDataset& data, const std::vector<int>& training_days);
    void apply(WindowSample& sample) const;
    bool empty() const { return mean.size() == 0; }
};

// -- SGRD grid files ----------------------------------------------------------
// "SGRD", then little-endian uint32 version, C, T, H, W, then C*T*H*W
// little-endian float32 values in row-major C, T, H, W order.

inline constexpr std::uint32_t kGridFileVersion = 1;

void write_grid(std::ostream& os, const TensorXd& grid);
// Returns a C x T x H x W tensor.
TensorXd read_grid(std::istream& is);

} // namespace symptomcast

#endif
