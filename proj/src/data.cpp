#include "laser/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "laser/errors.hpp"
#include "laser/rng.hpp"

namespace laser {

namespace {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& cell, const std::string& where) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw ParseError(where + ": expected a number, got '" + cell + "'");
    return v;
}

long parse_int(const std::string& cell, const std::string& where) {
    long v = 0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw ParseError(where + ": expected an integer, got '" + cell + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

// cyclic Jacobi for small symmetric matrices; returns eigenvalues ascending
void jacobi_eigen(std::vector<std::vector<double>> a, std::vector<double>& eigvals,
                  std::vector<std::vector<double>>& eigvecs) {
    const std::size_t n = a.size();
    eigvecs.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) eigvecs[i][i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-28) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a[i][p], aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a[p][i], aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = eigvecs[i][p], viq = eigvecs[i][q];
                    eigvecs[i][p] = c * vip - s * viq;
                    eigvecs[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    eigvals.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigvals[i] = a[i][i];
    // sort ascending, keeping vectors aligned
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return eigvals[x] < eigvals[y]; });
    std::vector<double> ev(n);
    std::vector<std::vector<double>> vecs(n, std::vector<double>(n));
    for (std::size_t j = 0; j < n; ++j) {
        ev[j] = eigvals[order[j]];
        for (std::size_t i = 0; i < n; ++i) vecs[i][j] = eigvecs[i][order[j]];
    }
    eigvals = std::move(ev);
    eigvecs = std::move(vecs);
}

}  // namespace

PartitionedDataset synth_classification(int n_samples, int num_clients, const std::vector<int>& widths,
                                        int num_classes, double informative_overlap, double noise,
                                        std::uint64_t seed) {
    if (n_samples < 1) throw InputError("n_samples must be positive");
    if (num_clients < 1) throw InputError("num_clients must be positive");
    if (static_cast<int>(widths.size()) != num_clients) throw InputError("widths count must equal num_clients");
    for (int w : widths)
        if (w < 1) throw InputError("block widths must be positive");
    if (num_classes < 2) throw InputError("num_classes must be at least 2");
    if (!(informative_overlap >= 0.0 && informative_overlap <= 1.0))
        throw InputError("informative_overlap must lie in [0,1]");
    if (!(noise >= 0.0)) throw InputError("noise must be nonnegative");

    PartitionedDataset ds;
    ds.num_samples = n_samples;
    ds.num_clients = num_clients;
    ds.num_classes = num_classes;
    ds.block_widths = widths;

    SplitMix64 label_rng(seed_for(seed, "labels"));
    ds.labels.reserve(static_cast<std::size_t>(n_samples));
    for (int n = 0; n < n_samples; ++n)
        ds.labels.push_back(static_cast<int>(label_rng.next_below(static_cast<std::uint64_t>(num_classes))));

    const int d_latent = 8;
    std::vector<std::vector<double>> latent(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) {
        SplitMix64 rng(seed_for(seed, "latent", static_cast<std::uint64_t>(c)));
        for (int j = 0; j < d_latent; ++j) latent[static_cast<std::size_t>(c)].push_back(rng.normal());
    }

    const double shared_w = std::sqrt(informative_overlap);
    const double own_w = std::sqrt(1.0 - informative_overlap);

    for (int k = 0; k < num_clients; ++k) {
        const int width = widths[static_cast<std::size_t>(k)];
        // fixed per-block projection of the shared class signal
        SplitMix64 proj_rng(seed_for(seed, "proj", static_cast<std::uint64_t>(k)));
        std::vector<double> proj(static_cast<std::size_t>(width) * d_latent);
        for (double& v : proj) v = proj_rng.normal() / std::sqrt(static_cast<double>(d_latent));

        // per-class block means
        std::vector<std::vector<double>> mean(static_cast<std::size_t>(num_classes),
                                              std::vector<double>(static_cast<std::size_t>(width)));
        for (int c = 0; c < num_classes; ++c) {
            SplitMix64 own_rng(seed_for(seed, "own", static_cast<std::uint64_t>(c * num_clients + k)));
            for (int j = 0; j < width; ++j) {
                double sh = 0.0;
                for (int l = 0; l < d_latent; ++l)
                    sh += proj[static_cast<std::size_t>(j) * d_latent + l] * latent[static_cast<std::size_t>(c)][l];
                mean[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] = own_w * own_rng.normal() + shared_w * sh;
            }
        }

        Tensor block({static_cast<std::size_t>(n_samples), static_cast<std::size_t>(width)});
        SplitMix64 noise_rng(seed_for(seed, "noise", static_cast<std::uint64_t>(k)));
        for (int n = 0; n < n_samples; ++n) {
            const auto& mu = mean[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(n)])];
            for (int j = 0; j < width; ++j)
                block.at(static_cast<std::size_t>(n), static_cast<std::size_t>(j)) =
                    mu[static_cast<std::size_t>(j)] + noise * noise_rng.normal();
        }

        // standardize columns to zero mean, unit variance
        for (int j = 0; j < width; ++j) {
            double m = 0.0;
            for (int n = 0; n < n_samples; ++n) m += block.at(static_cast<std::size_t>(n), static_cast<std::size_t>(j));
            m /= n_samples;
            double var = 0.0;
            for (int n = 0; n < n_samples; ++n) {
                const double d = block.at(static_cast<std::size_t>(n), static_cast<std::size_t>(j)) - m;
                var += d * d;
            }
            const double sd = std::sqrt(var / n_samples);
            const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
            for (int n = 0; n < n_samples; ++n) {
                double& v = block.at(static_cast<std::size_t>(n), static_cast<std::size_t>(j));
                v = (v - m) * inv;
            }
        }
        ds.blocks.push_back(std::move(block));
    }
    return ds;
}

namespace {

PartitionedDataset slice_rows(const PartitionedDataset& ds, int begin, int end) {
    PartitionedDataset out;
    out.num_samples = end - begin;
    out.num_clients = ds.num_clients;
    out.num_classes = ds.num_classes;
    out.block_widths = ds.block_widths;
    for (int k = 0; k < ds.num_clients; ++k) {
        const Tensor& src = ds.blocks[static_cast<std::size_t>(k)];
        const std::size_t w = src.cols();
        Tensor dst({static_cast<std::size_t>(end - begin), w});
        for (int n = begin; n < end; ++n)
            for (std::size_t j = 0; j < w; ++j)
                dst.at(static_cast<std::size_t>(n - begin), j) = src.at(static_cast<std::size_t>(n), j);
        out.blocks.push_back(std::move(dst));
    }
    out.labels.assign(ds.labels.begin() + begin, ds.labels.begin() + end);
    return out;
}

}  // namespace

PartitionedDataset head_rows(const PartitionedDataset& ds, int n) {
    if (n < 0 || n > ds.num_samples) throw InputError("head_rows: row count out of range");
    return slice_rows(ds, 0, n);
}

PartitionedDataset tail_rows(const PartitionedDataset& ds, int n_skip) {
    if (n_skip < 0 || n_skip > ds.num_samples) throw InputError("tail_rows: skip count out of range");
    return slice_rows(ds, n_skip, ds.num_samples);
}

void save_dataset_csv(const PartitionedDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    int total = 0;
    for (int w : ds.block_widths) total += w;
    out << "sample_id";
    for (int j = 0; j < total; ++j) out << ",f" << j;
    out << ",label\n";
    for (int n = 0; n < ds.num_samples; ++n) {
        out << n;
        for (int k = 0; k < ds.num_clients; ++k) {
            const Tensor& b = ds.blocks[static_cast<std::size_t>(k)];
            for (std::size_t j = 0; j < b.cols(); ++j)
                out << ',' << format_double(b.at(static_cast<std::size_t>(n), j));
        }
        out << ',' << ds.labels[static_cast<std::size_t>(n)] << "\n";
    }
}

PartitionedDataset load_csv(const std::string& path, const std::vector<std::pair<int, int>>& block_ranges) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 3 || header.front() != "sample_id" || header.back() != "label")
        throw ParseError(path + ": expected header 'sample_id,<features...>,label'");
    const int width = static_cast<int>(header.size()) - 2;

    if (block_ranges.empty()) throw ParseError(path + ": block schema is empty");
    int cursor = 0;
    for (std::size_t k = 0; k < block_ranges.size(); ++k) {
        const auto [lo, hi] = block_ranges[k];
        if (lo != cursor || hi <= lo)
            throw ParseError(path + ": block schema range " + std::to_string(k + 1) + " [" + std::to_string(lo) +
                             "," + std::to_string(hi) + ") does not continue at column " + std::to_string(cursor));
        cursor = hi;
    }
    if (cursor != width)
        throw ParseError(path + ": block schema covers " + std::to_string(cursor) + " feature columns, file has " +
                         std::to_string(width));

    std::vector<double> features;
    std::vector<int> labels;
    int rows = 0;
    for (int lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (static_cast<int>(cells.size()) != width + 2)
            throw ParseError(path + ": row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                             " cells, expected " + std::to_string(width + 2));
        for (int j = 0; j < width; ++j)
            features.push_back(parse_double(cells[static_cast<std::size_t>(j) + 1],
                                            path + ": row " + std::to_string(lineno) + " column " +
                                                std::to_string(j + 2)));
        const long y = parse_int(cells.back(), path + ": row " + std::to_string(lineno) + " label column");
        if (y < 0) throw ParseError(path + ": row " + std::to_string(lineno) + ": negative label");
        labels.push_back(static_cast<int>(y));
        ++rows;
    }
    if (rows == 0) throw ParseError(path + ": no data rows");

    PartitionedDataset ds;
    ds.num_samples = rows;
    ds.num_clients = static_cast<int>(block_ranges.size());
    ds.labels = std::move(labels);
    ds.num_classes = std::max(2, *std::max_element(ds.labels.begin(), ds.labels.end()) + 1);
    for (const auto& [lo, hi] : block_ranges) {
        ds.block_widths.push_back(hi - lo);
        Tensor block({static_cast<std::size_t>(rows), static_cast<std::size_t>(hi - lo)});
        for (int n = 0; n < rows; ++n)
            for (int j = lo; j < hi; ++j)
                block.at(static_cast<std::size_t>(n), static_cast<std::size_t>(j - lo)) =
                    features[static_cast<std::size_t>(n) * width + static_cast<std::size_t>(j)];
        ds.blocks.push_back(std::move(block));
    }
    return ds;
}

Batch make_batch(const PartitionedDataset& ds, const std::vector<int>& rows, BlockSet needed) {
    Batch batch;
    batch.blocks.resize(static_cast<std::size_t>(ds.num_clients));
    batch.labels.reserve(rows.size());
    for (int n : rows) batch.labels.push_back(ds.labels[static_cast<std::size_t>(n)]);
    for (int k = 0; k < ds.num_clients; ++k) {
        if (!contains(needed, k)) continue;
        const Tensor& src = ds.blocks[static_cast<std::size_t>(k)];
        Tensor dst({rows.size(), src.cols()});
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < src.cols(); ++j)
                dst.at(i, j) = src.at(static_cast<std::size_t>(rows[i]), j);
        batch.blocks[static_cast<std::size_t>(k)] = std::move(dst);
    }
    return batch;
}

Tensor sample_block(const PartitionedDataset& ds, int k, int n) {
    const Tensor& src = ds.blocks[static_cast<std::size_t>(k)];
    Tensor out({1, src.cols()});
    for (std::size_t j = 0; j < src.cols(); ++j) out.at(0, j) = src.at(static_cast<std::size_t>(n), j);
    return out;
}

// --- quadratic testbed ---------------------------------------------------------

double QuadraticTestbed::loss(const std::vector<double>& theta) const {
    const std::size_t n = design.rows(), d = design.cols();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = -target[i];
        for (std::size_t j = 0; j < d; ++j) r += design.at(i, j) * theta[j];
        acc += r * r;
    }
    return acc / static_cast<double>(n);
}

std::vector<double> QuadraticTestbed::grad(const std::vector<double>& theta) const {
    const std::size_t n = design.rows(), d = design.cols();
    std::vector<double> g(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double r = -target[i];
        for (std::size_t j = 0; j < d; ++j) r += design.at(i, j) * theta[j];
        for (std::size_t j = 0; j < d; ++j) g[j] += 2.0 * design.at(i, j) * r;
    }
    for (double& v : g) v /= static_cast<double>(n);
    return g;
}

std::vector<double> QuadraticTestbed::batch_grad(const std::vector<double>& theta,
                                                 const std::vector<int>& rows) const {
    const std::size_t d = design.cols();
    std::vector<double> g(d, 0.0);
    for (int row : rows) {
        const std::size_t i = static_cast<std::size_t>(row);
        double r = -target[i];
        for (std::size_t j = 0; j < d; ++j) r += design.at(i, j) * theta[j];
        for (std::size_t j = 0; j < d; ++j) g[j] += 2.0 * design.at(i, j) * r;
    }
    for (double& v : g) v /= static_cast<double>(rows.size());
    return g;
}

QuadraticTestbed quadratic_testbed(int dim, double condition_number, std::uint64_t seed, int n_rows) {
    if (dim < 1) throw InputError("dim must be positive");
    if (!(condition_number >= 1.0)) throw InputError("condition_number must be at least 1");
    if (n_rows < dim) throw InputError("n_rows must be at least dim");

    const double l_top = 1.0;
    const double mu = l_top / condition_number;
    std::vector<double> spectrum(static_cast<std::size_t>(dim));
    for (int j = 0; j < dim; ++j)
        spectrum[static_cast<std::size_t>(j)] =
            dim == 1 ? l_top : mu + (l_top - mu) * static_cast<double>(j) / static_cast<double>(dim - 1);

    SplitMix64 grng(seed_for(seed, "design"));
    Tensor g({static_cast<std::size_t>(n_rows), static_cast<std::size_t>(dim)});
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] = grng.normal();

    // reshape the Gaussian so the Hessian (2/N) A^T A has exactly `spectrum`
    std::vector<std::vector<double>> m(static_cast<std::size_t>(dim), std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    for (int p = 0; p < dim; ++p)
        for (int q = 0; q < dim; ++q) {
            double acc = 0.0;
            for (int i = 0; i < n_rows; ++i)
                acc += g.at(static_cast<std::size_t>(i), static_cast<std::size_t>(p)) *
                       g.at(static_cast<std::size_t>(i), static_cast<std::size_t>(q));
            m[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)] = acc;
        }
    std::vector<double> lam;
    std::vector<std::vector<double>> v;
    jacobi_eigen(m, lam, v);

    // T = V diag(sqrt(target*N/2 / lam)) V^T ; A = G T
    std::vector<std::vector<double>> t(static_cast<std::size_t>(dim), std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    for (int p = 0; p < dim; ++p)
        for (int q = 0; q < dim; ++q) {
            double acc = 0.0;
            for (int r = 0; r < dim; ++r) {
                const double d = std::sqrt(spectrum[static_cast<std::size_t>(r)] * static_cast<double>(n_rows) / 2.0 /
                                           lam[static_cast<std::size_t>(r)]);
                acc += v[static_cast<std::size_t>(p)][static_cast<std::size_t>(r)] * d *
                       v[static_cast<std::size_t>(q)][static_cast<std::size_t>(r)];
            }
            t[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)] = acc;
        }

    QuadraticTestbed tb;
    tb.design = Tensor({static_cast<std::size_t>(n_rows), static_cast<std::size_t>(dim)});
    for (int i = 0; i < n_rows; ++i)
        for (int q = 0; q < dim; ++q) {
            double acc = 0.0;
            for (int p = 0; p < dim; ++p)
                acc += g.at(static_cast<std::size_t>(i), static_cast<std::size_t>(p)) *
                       t[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)];
            tb.design.at(static_cast<std::size_t>(i), static_cast<std::size_t>(q)) = acc;
        }

    SplitMix64 gen_rng(seed_for(seed, "gen"));
    std::vector<double> theta_gen(static_cast<std::size_t>(dim));
    for (double& x : theta_gen) x = gen_rng.normal();

    SplitMix64 resid_rng(seed_for(seed, "resid"));
    tb.target.resize(static_cast<std::size_t>(n_rows));
    for (int i = 0; i < n_rows; ++i) {
        double acc = 0.0;
        for (int j = 0; j < dim; ++j)
            acc += tb.design.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                   theta_gen[static_cast<std::size_t>(j)];
        tb.target[static_cast<std::size_t>(i)] = acc + 0.5 * resid_rng.normal();
    }

    // optimum in closed form through the known eigendecomposition of A^T A
    std::vector<double> atb(static_cast<std::size_t>(dim), 0.0);
    for (int j = 0; j < dim; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n_rows; ++i)
            acc += tb.design.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                   tb.target[static_cast<std::size_t>(i)];
        atb[static_cast<std::size_t>(j)] = acc;
    }
    // recompute eigenvectors of A^T A for the solve (spectrum is exact by construction)
    std::vector<std::vector<double>> ata(static_cast<std::size_t>(dim), std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    for (int p = 0; p < dim; ++p)
        for (int q = 0; q < dim; ++q) {
            double acc = 0.0;
            for (int i = 0; i < n_rows; ++i)
                acc += tb.design.at(static_cast<std::size_t>(i), static_cast<std::size_t>(p)) *
                       tb.design.at(static_cast<std::size_t>(i), static_cast<std::size_t>(q));
            ata[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)] = acc;
        }
    std::vector<double> lam2;
    std::vector<std::vector<double>> v2;
    jacobi_eigen(ata, lam2, v2);
    tb.theta_opt.assign(static_cast<std::size_t>(dim), 0.0);
    for (int r = 0; r < dim; ++r) {
        double proj = 0.0;
        for (int p = 0; p < dim; ++p)
            proj += v2[static_cast<std::size_t>(p)][static_cast<std::size_t>(r)] * atb[static_cast<std::size_t>(p)];
        proj /= lam2[static_cast<std::size_t>(r)];
        for (int p = 0; p < dim; ++p)
            tb.theta_opt[static_cast<std::size_t>(p)] +=
                v2[static_cast<std::size_t>(p)][static_cast<std::size_t>(r)] * proj;
    }

    SplitMix64 start_rng(seed_for(seed, "start"));
    tb.theta_start.resize(static_cast<std::size_t>(dim));
    for (int j = 0; j < dim; ++j)
        tb.theta_start[static_cast<std::size_t>(j)] = tb.theta_opt[static_cast<std::size_t>(j)] + 2.0 * start_rng.normal();

    tb.mu = spectrum.front();
    tb.l_smooth = spectrum.back();
    tb.loss_opt = tb.loss(tb.theta_opt);
    return tb;
}

// --- subset quadratic ------------------------------------------------------------

double SubsetQuadratic::loss(const std::vector<double>& theta) const {
    const std::size_t d = static_cast<std::size_t>(dim());
    double acc = constant_term;
    for (std::size_t p = 0; p < d; ++p) {
        acc += linear_term[p] * theta[p];
        double hrow = 0.0;
        for (std::size_t q = 0; q < d; ++q) hrow += hessian[p][q] * theta[q];
        acc += 0.5 * theta[p] * hrow;
    }
    return acc;
}

std::vector<double> SubsetQuadratic::grad(const std::vector<double>& theta) const {
    const std::size_t d = static_cast<std::size_t>(dim());
    std::vector<double> g(d, 0.0);
    for (std::size_t p = 0; p < d; ++p) {
        double acc = linear_term[p];
        for (std::size_t q = 0; q < d; ++q) acc += hessian[p][q] * theta[q];
        g[p] = acc;
    }
    return g;
}

std::vector<double> SubsetQuadratic::sampled_grad(const std::vector<double>& theta, const std::vector<int>& rows,
                                                  const TaskDraw& draw) const {
    validate_draw(draw, full_set(num_blocks));
    const std::size_t d = static_cast<std::size_t>(dim());
    std::vector<double> g(d, 0.0);
    std::vector<double> resid(rows.size());
    for (const ClientTaskDraw& cd : draw.clients) {
        for (int i = 1; i <= num_blocks; ++i) {
            const BlockSet task = cd.sets[static_cast<std::size_t>(i - 1)];
            const double inv_card = 1.0 / static_cast<double>(i);
            const double a = task_weight(i, num_blocks);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const std::size_t row = static_cast<std::size_t>(rows[r]);
                double pred = 0.0;
                for (std::size_t p = 0; p < d; ++p)
                    if (contains(task, block_of_col[p])) pred += design.at(row, p) * theta[p];
                resid[r] = inv_card * pred - target[row];
            }
            const double scale = a * 2.0 * inv_card / static_cast<double>(rows.size());
            for (std::size_t p = 0; p < d; ++p) {
                if (!contains(task, block_of_col[p])) continue;
                double acc = 0.0;
                for (std::size_t r = 0; r < rows.size(); ++r)
                    acc += design.at(static_cast<std::size_t>(rows[r]), p) * resid[r];
                g[p] += scale * acc;
            }
        }
    }
    return g;
}

SubsetQuadratic subset_quadratic(const QuadraticTestbed& base, int num_blocks) {
    const int dim = base.dim();
    if (num_blocks < 1 || num_blocks > dim) throw InputError("num_blocks must lie in [1, dim]");
    if (num_blocks > 12) throw CapacityError("subset quadratic guarded at 12 blocks");

    SubsetQuadratic sq;
    sq.design = base.design;
    sq.target = base.target;
    sq.num_blocks = num_blocks;
    sq.theta_start = base.theta_start;

    // even column split, leftover columns go to the leading blocks
    sq.block_of_col.resize(static_cast<std::size_t>(dim));
    {
        const int base_w = dim / num_blocks, extra = dim % num_blocks;
        int col = 0;
        for (int k = 0; k < num_blocks; ++k) {
            const int w = base_w + (k < extra ? 1 : 0);
            for (int j = 0; j < w; ++j) sq.block_of_col[static_cast<std::size_t>(col++)] = k;
        }
    }

    // subset-sum coefficients: c_same = sum_s (1/s^2) C(K-1,s-1) for columns in
    // the same block, c_diff = sum_s (1/s^2) C(K-2,s-2) otherwise, and
    // d_coef = sum_s (1/s) C(K-1,s-1) for the linear term
    const int K = num_blocks;
    double c_same = 0.0, c_diff = 0.0, d_coef = 0.0;
    for (int s = 1; s <= K; ++s) {
        const double inv2 = 1.0 / (static_cast<double>(s) * s);
        c_same += inv2 * static_cast<double>(binomial(K - 1, s - 1));
        d_coef += (1.0 / s) * static_cast<double>(binomial(K - 1, s - 1));
        if (s >= 2) c_diff += inv2 * static_cast<double>(binomial(K - 2, s - 2));
    }

    const std::size_t d = static_cast<std::size_t>(dim);
    const std::size_t n = sq.design.rows();
    std::vector<std::vector<double>> ata(d, std::vector<double>(d, 0.0));
    std::vector<double> atb(d, 0.0);
    for (std::size_t p = 0; p < d; ++p) {
        for (std::size_t q = 0; q < d; ++q) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += sq.design.at(i, p) * sq.design.at(i, q);
            ata[p][q] = acc;
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += sq.design.at(i, p) * sq.target[i];
        atb[p] = acc;
    }

    sq.hessian.assign(d, std::vector<double>(d, 0.0));
    sq.linear_term.assign(d, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t p = 0; p < d; ++p) {
        for (std::size_t q = 0; q < d; ++q) {
            const double c = sq.block_of_col[p] == sq.block_of_col[q] ? c_same : c_diff;
            sq.hessian[p][q] = 2.0 * inv_n * c * ata[p][q];
        }
        sq.linear_term[p] = -2.0 * inv_n * d_coef * atb[p];
    }
    double btb = 0.0;
    for (std::size_t i = 0; i < n; ++i) btb += sq.target[i] * sq.target[i];
    sq.constant_term = (std::pow(2.0, K) - 1.0) * inv_n * btb;

    std::vector<double> lam;
    std::vector<std::vector<double>> v;
    jacobi_eigen(sq.hessian, lam, v);
    sq.mu = lam.front();
    sq.l_smooth = lam.back();

    // optimum: H theta = -linear_term via the eigendecomposition
    sq.theta_opt.assign(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
        double proj = 0.0;
        for (std::size_t p = 0; p < d; ++p) proj += v[p][r] * (-sq.linear_term[p]);
        proj /= lam[r];
        for (std::size_t p = 0; p < d; ++p) sq.theta_opt[p] += v[p][r] * proj;
    }
    sq.loss_opt = sq.loss(sq.theta_opt);
    return sq;
}

}  // namespace laser
