#include "symptomcast/gridder.hpp"

#include "symptomcast/binio.hpp"
#include "symptomcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>

namespace symptomcast {

using nn::Shape;
using nn::shape_str;

void GridSpec::validate() const
{
    if (rows < 1 || cols < 1) {
        throw ConfigError("grid needs at least one row and one column, got " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
    if (!bounds.valid()) {
        throw ConfigError("grid bounds are empty or inverted");
    }
}

std::optional<std::pair<Index, Index>> GridSpec::cell_of(double x, double y) const
{
    if (!bounds.contains(x, y)) {
        return std::nullopt;
    }
    const double fr = (y - bounds.y_min) / (bounds.y_max - bounds.y_min) * static_cast<double>(rows);
    const double fc = (x - bounds.x_min) / (bounds.x_max - bounds.x_min) * static_cast<double>(cols);
    const Index r = std::min(rows - 1, static_cast<Index>(std::floor(fr)));
    const Index c = std::min(cols - 1, static_cast<Index>(std::floor(fc)));
    return std::make_pair(r, c);
}

std::pair<double, double> GridSpec::cell_center(Index row, Index col) const
{
    return {bounds.x_min + (static_cast<double>(col) + 0.5) * cell_width(),
            bounds.y_min + (static_cast<double>(row) + 0.5) * cell_height()};
}

std::size_t Binning::binned() const
{
    std::size_t n = 0;
    for (const auto& c : cells) {
        n += c.size();
    }
    return n;
}

Binning bin_records(const std::vector<SurveyRecord>& records, const GridSpec& spec, std::optional<int> day)
{
    spec.validate();
    Binning out;
    out.cells.resize(static_cast<std::size_t>(spec.cells()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const SurveyRecord& r = records[i];
        if (day && r.date != *day) {
            continue;
        }
        const auto cell = spec.cell_of(r.x, r.y);
        if (!cell) {
            out.rejected.push_back(i);
            out.errors.push_back("record " + std::to_string(i) + ": location out of bounds");
            continue;
        }
        out.cells[static_cast<std::size_t>(cell->first * spec.cols + cell->second)].push_back(i);
    }
    return out;
}

TensorXd interpolate_empty_cells(const TensorXd& grid, const Mask& observed, Interpolation mode, double cell_height,
                                 double cell_width)
{
    if (grid.rank() != 3) {
        throw std::invalid_argument("interpolate_empty_cells expects C x H x W, got " + shape_str(grid.shape()));
    }
    const Index C = grid.dim(0), H = grid.dim(1), W = grid.dim(2);
    if (observed.size() != H * W) {
        throw std::invalid_argument("observed mask size does not match grid " + shape_str(grid.shape()));
    }
    std::vector<Index> sources;
    for (Index i = 0; i < H * W; ++i) {
        if (observed[i]) {
            sources.push_back(i);
        }
    }
    if (sources.empty()) {
        throw DataError("no observed cells to interpolate from");
    }

    TensorXd out = grid;
    auto channels = out.matrix(C, H * W);
    for (Index cell = 0; cell < H * W; ++cell) {
        if (observed[cell]) {
            continue;
        }
        const Index r = cell / W, c = cell % W;
        auto dist2 = [&](Index s) {
            const double dy = static_cast<double>(s / W - r) * cell_height;
            const double dx = static_cast<double>(s % W - c) * cell_width;
            return dy * dy + dx * dx;
        };
        if (mode == Interpolation::nearest) {
            // sources are row-major, so strict < keeps the lexicographically smallest tie
            Index best = sources.front();
            double best_d = dist2(best);
            for (Index s : sources) {
                const double d = dist2(s);
                if (d < best_d) {
                    best_d = d;
                    best = s;
                }
            }
            channels.col(cell) = channels.col(best);
        } else {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(C);
            double wsum = 0.0;
            for (Index s : sources) {
                const double w = 1.0 / dist2(s);
                acc += w * channels.col(s);
                wsum += w;
            }
            channels.col(cell) = acc / wsum;
        }
    }
    return out;
}

namespace {

Eigen::MatrixXd encode_subset(const std::vector<SurveyRecord>& records, const std::vector<std::size_t>& idx)
{
    Eigen::MatrixXd x(static_cast<Index>(idx.size()), kEncodedDim);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        x.row(static_cast<Index>(i)) = encode_record(records[idx[i]]).transpose();
    }
    return x;
}

DayTensor rasterize_binned(const std::vector<SurveyRecord>& records, const Binning& bins, const GridSpec& spec,
                           const ProfileModel& model, int day, Interpolation mode)
{
    const Index C = static_cast<Index>(model.clusters()) * kSlotSize;
    DayTensor out;
    out.day = day;
    out.values = TensorXd::zeros({C, spec.rows, spec.cols});
    out.observed = Mask::Constant(spec.cells(), false);
    auto channels = out.values.matrix(C, spec.cells());
    for (Index cell = 0; cell < spec.cells(); ++cell) {
        const auto& members = bins.cells[static_cast<std::size_t>(cell)];
        if (members.empty()) {
            continue;
        }
        channels.col(cell) = aggregate_features(encode_subset(records, members), model).values;
        out.observed[cell] = true;
    }
    if (!out.observed.any()) {
        throw DataError("day " + std::to_string(day) + " has no records inside the grid");
    }
    out.values = interpolate_empty_cells(out.values, out.observed, mode, spec.cell_height(), spec.cell_width());
    return out;
}

LabelGrid label_binned(const std::vector<SurveyRecord>& records, const Binning& bins, const GridSpec& spec, int day)
{
    LabelGrid out;
    out.day = day;
    out.sra = TensorXd::zeros({spec.rows, spec.cols});
    out.observed = Mask::Constant(spec.cells(), false);
    for (Index cell = 0; cell < spec.cells(); ++cell) {
        const auto& members = bins.cells[static_cast<std::size_t>(cell)];
        if (members.empty()) {
            continue;
        }
        double sum = 0.0;
        for (std::size_t i : members) {
            sum += compute_sra(records[i]);
        }
        out.sra[cell] = sum / static_cast<double>(members.size());
        out.observed[cell] = true;
    }
    return out;
}

} // namespace

DayTensor rasterize_day(const std::vector<SurveyRecord>& records, const GridSpec& spec, const ProfileModel& model,
                        int day, Interpolation mode)
{
    return rasterize_binned(records, bin_records(records, spec, day), spec, model, day, mode);
}

LabelGrid label_day(const std::vector<SurveyRecord>& records, const GridSpec& spec, int day)
{
    return label_binned(records, bin_records(records, spec, day), spec, day);
}

GriddedDataset build_dataset(const std::vector<SurveyRecord>& records, const GridSpec& spec,
                             const ProfileModel& model, Interpolation mode)
{
    spec.validate();
    GriddedDataset out;
    out.spec = spec;
    if (records.empty()) {
        return out;
    }
    std::map<int, std::vector<SurveyRecord>> by_day;
    for (const auto& r : records) {
        by_day[r.date].push_back(r);
    }
    const int first = by_day.begin()->first;
    const int last = by_day.rbegin()->first;
    for (int day = first; day <= last; ++day) {
        const auto it = by_day.find(day);
        if (it == by_day.end()) {
            out.dropped_days.push_back(day);
            std::clog << "warning: day " << day << " has no records, dropped\n";
            continue;
        }
        const Binning bins = bin_records(it->second, spec, std::nullopt);
        if (bins.binned() == 0) {
            out.dropped_days.push_back(day);
            std::clog << "warning: day " << day << " has no records inside the grid, dropped\n";
            continue;
        }
        out.binned_records += bins.binned();
        out.days.push_back(rasterize_binned(it->second, bins, spec, model, day, mode));
        out.labels.push_back(label_binned(it->second, bins, spec, day));
    }
    return out;
}

namespace {

WindowSample stack_window(const GriddedDataset& data, const std::vector<std::size_t>& inputs, int first_day, Index H,
                          Index W)
{
    const Index C = data.days[inputs.front()].values.dim(0);
    const Index T = static_cast<Index>(inputs.size());
    WindowSample s;
    s.input = TensorXd::zeros({C, T, H, W});
    auto dst = s.input.matrix(C * T, H * W);
    for (Index k = 0; k < T; ++k) {
        const auto src = data.days[inputs[static_cast<std::size_t>(k)]].values.matrix(C, H * W);
        for (Index c = 0; c < C; ++c) {
            dst.row(c * T + k) = src.row(c);
        }
        s.input_dates.push_back(first_day + static_cast<int>(k));
    }
    return s;
}

} // namespace

std::vector<WindowSample> build_windows(const GriddedDataset& data, int input_days, int horizon)
{
    if (input_days < 1 || horizon < 1) {
        throw ConfigError("window needs input_days >= 1 and horizon >= 1");
    }
    std::map<int, std::size_t> index;
    for (std::size_t i = 0; i < data.days.size(); ++i) {
        index[data.days[i].day] = i;
    }
    std::vector<WindowSample> out;
    if (index.empty()) {
        return out;
    }
    const Index H = data.spec.rows, W = data.spec.cols;
    const int first = index.begin()->first;
    const int last = index.rbegin()->first;
    for (int t = first; t + input_days + horizon - 1 <= last; ++t) {
        const int target = t + input_days + horizon - 1;
        const auto label_it = index.find(target);
        if (label_it == index.end()) {
            continue;
        }
        std::vector<std::size_t> inputs;
        for (int d = t; d < t + input_days; ++d) {
            const auto it = index.find(d);
            if (it == index.end()) {
                break;
            }
            inputs.push_back(it->second);
        }
        if (static_cast<int>(inputs.size()) != input_days) {
            continue;
        }
        const LabelGrid& label = data.labels[label_it->second];
        if (!label.observed.any()) {
            continue;
        }
        WindowSample s = stack_window(data, inputs, t, H, W);
        s.label = label.sra;
        s.label_mask = label.observed;
        s.target_date = target;
        out.push_back(std::move(s));
    }
    return out;
}

WindowSample forecast_window(const GriddedDataset& data, int target, int input_days, int horizon)
{
    if (input_days < 1 || horizon < 1) {
        throw ConfigError("window needs input_days >= 1 and horizon >= 1");
    }
    const int first = target - horizon - input_days + 1;
    std::vector<std::size_t> inputs;
    for (int d = first; d < first + input_days; ++d) {
        const auto it = std::find_if(data.days.begin(), data.days.end(), [d](const DayTensor& t) { return t.day == d; });
        if (it == data.days.end()) {
            throw DataError("no data for input day " + std::to_string(d) + " of target day " + std::to_string(target));
        }
        inputs.push_back(static_cast<std::size_t>(it - data.days.begin()));
    }
    WindowSample s = stack_window(data, inputs, first, data.spec.rows, data.spec.cols);
    s.target_date = target;
    s.label = TensorXd::zeros({data.spec.rows, data.spec.cols});
    s.label_mask = Mask::Constant(data.spec.cells(), false);
    for (const LabelGrid& l : data.labels) {
        if (l.day == target) {
            s.label = l.sra;
            s.label_mask = l.observed;
        }
    }
    return s;
}

namespace {

std::vector<Index> starts_along(Index extent, Index patch, Index stride)
{
    if (patch < 1 || patch > extent || stride < 1) {
        throw ConfigError("patch " + std::to_string(patch) + " with stride " + std::to_string(stride) +
                          " does not fit extent " + std::to_string(extent));
    }
    std::vector<Index> s;
    for (Index p = 0; p + patch <= extent; p += stride) {
        s.push_back(p);
    }
    if (s.back() + patch < extent) {
        s.push_back(extent - patch);
    }
    return s;
}

} // namespace

PatchGrid patch_grid(Index rows, Index cols, Index patch_rows, Index patch_cols, Index stride_rows,
                     Index stride_cols)
{
    return {starts_along(rows, patch_rows, stride_rows), starts_along(cols, patch_cols, stride_cols)};
}

std::vector<WindowSample> extract_patches(const WindowSample& sample, Index patch_rows, Index patch_cols,
                                          Index stride_rows, Index stride_cols)
{
    const Index C = sample.input.dim(0), T = sample.input.dim(1), H = sample.input.dim(2), W = sample.input.dim(3);
    const PatchGrid grid = patch_grid(H, W, patch_rows, patch_cols, stride_rows, stride_cols);
    std::vector<WindowSample> out;
    for (Index r0 : grid.row_starts) {
        for (Index c0 : grid.col_starts) {
            WindowSample p;
            p.input = TensorXd::zeros({C, T, patch_rows, patch_cols});
            p.label = TensorXd::zeros({patch_rows, patch_cols});
            p.label_mask = Mask::Constant(patch_rows * patch_cols, false);
            for (Index ct = 0; ct < C * T; ++ct) {
                for (Index r = 0; r < patch_rows; ++r) {
                    for (Index c = 0; c < patch_cols; ++c) {
                        p.input[(ct * patch_rows + r) * patch_cols + c] =
                            sample.input[(ct * H + r0 + r) * W + c0 + c];
                    }
                }
            }
            for (Index r = 0; r < patch_rows; ++r) {
                for (Index c = 0; c < patch_cols; ++c) {
                    p.label.at(r, c) = sample.label.at(r0 + r, c0 + c);
                    p.label_mask[r * patch_cols + c] = sample.label_mask[(r0 + r) * W + c0 + c];
                }
            }
            p.target_date = sample.target_date;
            p.input_dates = sample.input_dates;
            p.row0 = sample.row0 + r0;
            p.col0 = sample.col0 + c0;
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::vector<GriddedDataset> regrid(const std::vector<SurveyRecord>& records, const std::vector<Resolution>& resolutions,
                                   const Bounds2d& bounds, const ProfileModel& model)
{
    std::vector<GriddedDataset> out;
    for (const Resolution& res : resolutions) {
        out.push_back(build_dataset(records, GridSpec{res.rows, res.cols, bounds}, model));
    }
    return out;
}

ChannelNorm ChannelNorm::fit(const GriddedDataset& data, const std::vector<int>& training_days)
{
    if (data.days.empty()) {
        throw DataError("cannot fit normalization on an empty dataset");
    }
    const Index C = data.days.front().values.dim(0);
    const Index cells = data.spec.cells();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(C), sq = Eigen::VectorXd::Zero(C);
    double n = 0.0;
    for (const DayTensor& d : data.days) {
        if (std::find(training_days.begin(), training_days.end(), d.day) == training_days.end()) {
            continue;
        }
        const auto m = d.values.matrix(C, cells);
        sum += m.rowwise().sum();
        sq += m.array().square().rowwise().sum().matrix();
        n += static_cast<double>(cells);
    }
    if (n == 0.0) {
        throw DataError("no training days available for normalization");
    }
    ChannelNorm norm;
    norm.mean = sum / n;
    norm.stddev = (sq / n - norm.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
    for (Index c = 0; c < C; ++c) {
        if (norm.stddev[c] < 1e-8) {
            norm.stddev[c] = 1.0;
        }
    }
    return norm;
}

void ChannelNorm::apply(WindowSample& sample) const
{
    const Index C = sample.input.dim(0);
    if (C != mean.size()) {
        throw std::invalid_argument("normalization has " + std::to_string(mean.size()) + " channels, input has " +
                                    std::to_string(C));
    }
    auto m = sample.input.matrix(C, sample.input.size() / C);
    for (Index c = 0; c < C; ++c) {
        m.row(c).array() = (m.row(c).array() - mean[c]) / stddev[c];
    }
}

void write_grid(std::ostream& os, const TensorXd& grid)
{
    if (grid.rank() != 4) {
        throw std::invalid_argument("grid files hold C x T x H x W tensors, got " + shape_str(grid.shape()));
    }
    os.write("SGRD", 4);
    binio::write_le<std::uint32_t>(os, kGridFileVersion);
    for (Index i = 0; i < 4; ++i) {
        binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(grid.dim(i)));
    }
    for (Index i = 0; i < grid.size(); ++i) {
        binio::write_le<float>(os, static_cast<float>(grid[i]));
    }
    if (!os) {
        throw DataError("failed writing grid file");
    }
}

TensorXd read_grid(std::istream& is)
{
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "SGRD") {
        throw DataError("not a grid file (bad magic)");
    }
    try {
        const auto version = binio::read_le<std::uint32_t>(is);
        if (version != kGridFileVersion) {
            throw DataError("unsupported grid file version " + std::to_string(version));
        }
        Shape shape(4);
        for (auto& d : shape) {
            d = static_cast<Index>(binio::read_le<std::uint32_t>(is));
        }
        TensorXd out(shape);
        for (Index i = 0; i < out.size(); ++i) {
            out[i] = binio::read_le<float>(is);
        }
        return out;
    } catch (const std::runtime_error& e) {
        if (dynamic_cast<const DataError*>(&e)) {
            throw;
        }
        throw DataError(std::string("truncated grid file: ") + e.what());
    }
}

} // namespace symptomcast
