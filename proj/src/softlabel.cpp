#include "reffakd/softlabel.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "reffakd/kernels.hpp"
#include "reffakd/tensor.hpp"

namespace reffakd {

namespace {

double vector_norm(const double* v, int d) {
  double acc = 0.0;
  for (int t = 0; t < d; ++t) acc += v[t] * v[t];
  return std::sqrt(acc);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void validate_embedding_set(const EmbeddingSet& emb) {
  if (emb.c < 1 || emb.n < 1 || emb.d < 1)
    throw std::invalid_argument("embedding set: c, n, d must be >= 1");
  const size_t want = static_cast<size_t>(emb.c) * emb.n * emb.d;
  if (emb.data.size() != want)
    throw std::invalid_argument("embedding set: data holds " + std::to_string(emb.data.size()) +
                                " values, expected c*n*d = " + std::to_string(want));
  for (int i = 0; i < emb.c; ++i)
    for (int k = 0; k < emb.n; ++k)
      if (vector_norm(emb.vec(i, k), emb.d) == 0.0)
        throw std::runtime_error("embedding set: class " + std::to_string(i) + " sample " +
                                 std::to_string(k) + " has zero norm");
}

EmbeddingSet extract_embeddings(Model& cae, const Dataset& ds, int n_per_class, uint64_t seed) {
  if (!cae.has_tap("bottleneck"))
    throw std::invalid_argument("extract_embeddings: model has no bottleneck tap");
  const Dataset sub = subset_per_class(ds, n_per_class, seed);

  EmbeddingSet emb;
  emb.c = sub.num_classes;
  emb.n = n_per_class;

  NoGradGuard no_grad;
  const int pix = sub.image_numel();
  for (int cls = 0; cls < emb.c; ++cls) {
    std::vector<double> batch(static_cast<size_t>(n_per_class) * pix);
    for (int k = 0; k < n_per_class; ++k) {
      const auto& img = sub.images[static_cast<size_t>(cls) * n_per_class + k];
      std::copy(img.begin(), img.end(), batch.begin() + static_cast<size_t>(k) * pix);
    }
    const TensorPtr x =
        make_tensor({n_per_class, sub.channels, sub.height, sub.width}, std::move(batch));
    const TensorPtr z = cae.forward_tap(x, "bottleneck", /*training=*/false);
    const int d = static_cast<int>(z->numel() / n_per_class);
    if (emb.d == 0) {
      emb.d = d;
      emb.data.assign(static_cast<size_t>(emb.c) * emb.n * emb.d, 0.0);
    }
    std::copy(z->data.begin(), z->data.end(),
              emb.data.begin() + static_cast<size_t>(cls) * n_per_class * d);
  }
  validate_embedding_set(emb);
  return emb;
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size() || u.empty())
    throw std::invalid_argument("cosine: vectors must be nonempty and the same length");
  const int d = static_cast<int>(u.size());
  const double nu = vector_norm(u.data(), d);
  const double nv = vector_norm(v.data(), d);
  if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine: zero-norm input");
  double dot = 0.0;
  for (int t = 0; t < d; ++t) dot += u[t] * v[t];
  return dot / (nu * nv);
}

SimilarityMatrix build_similarity_matrix(const EmbeddingSet& emb, double gamma) {
  validate_embedding_set(emb);
  if (emb.n < 2)
    throw std::invalid_argument("similarity matrix: need n >= 2 for same-class averages");
  if (!(gamma >= 0.0)) throw std::invalid_argument("similarity matrix: gamma must be >= 0");

  std::vector<double> norms(static_cast<size_t>(emb.c) * emb.n);
  for (int i = 0; i < emb.c; ++i)
    for (int k = 0; k < emb.n; ++k)
      norms[static_cast<size_t>(i) * emb.n + k] = vector_norm(emb.vec(i, k), emb.d);

  SimilarityMatrix sim;
  sim.c = emb.c;
  sim.gamma = gamma;
  sim.values.assign(static_cast<size_t>(emb.c) * emb.c, 0.0);
  kern::class_mean_cosine(emb.data.data(), norms.data(), emb.c, emb.n, emb.d,
                          sim.values.data());
  for (int i = 0; i < emb.c; ++i) sim.values[static_cast<size_t>(i) * emb.c + i] += gamma;
  return sim;
}

double find_min_gamma(const std::vector<double>& pre_boost, int c, double grid_step) {
  if (c < 2) throw std::invalid_argument("find_min_gamma: need at least 2 classes");
  if (pre_boost.size() != static_cast<size_t>(c) * c)
    throw std::invalid_argument("find_min_gamma: matrix is not c x c");
  if (!(grid_step > 0.0)) throw std::invalid_argument("find_min_gamma: grid_step must be > 0");
  for (double v : pre_boost)
    if (!std::isfinite(v)) throw std::invalid_argument("find_min_gamma: non-finite matrix entry");

  for (long long k = 0;; ++k) {
    const double gamma = static_cast<double>(k) * grid_step;
    bool ok = true;
    for (int i = 0; i < c && ok; ++i) {
      const double diag = pre_boost[static_cast<size_t>(i) * c + i] + gamma;
      for (int j = 0; j < c; ++j)
        if (j != i && !(diag > pre_boost[static_cast<size_t>(i) * c + j])) {
          ok = false;
          break;
        }
    }
    if (ok) return gamma;
    if (k > 1000000000LL)
      throw std::runtime_error("find_min_gamma: no gamma found after 1e9 grid points");
  }
}

double find_min_gamma(const EmbeddingSet& emb, double grid_step) {
  const SimilarityMatrix pre = build_similarity_matrix(emb, 0.0);
  return find_min_gamma(pre.values, pre.c, grid_step);
}

SoftLabelTable to_soft_labels(const SimilarityMatrix& sim, SoftLabelProvenance provenance) {
  if (sim.c < 1 || sim.values.size() != static_cast<size_t>(sim.c) * sim.c)
    throw std::invalid_argument("to_soft_labels: matrix is not c x c");
  for (int i = 0; i < sim.c; ++i) {
    const double diag = sim.at(i, i);
    for (int j = 0; j < sim.c; ++j)
      if (j != i && !(diag > sim.at(i, j)))
        throw std::invalid_argument("to_soft_labels: row " + std::to_string(i) +
                                    " argmax is not its diagonal; increase gamma");
  }
  SoftLabelTable table;
  table.c = sim.c;
  table.rows.assign(sim.values.size(), 0.0);
  kern::row_softmax(sim.values.data(), table.rows.data(), sim.c, sim.c, 1.0);
  table.provenance = std::move(provenance);
  validate_soft_label_table(table);
  return table;
}

void validate_soft_label_table(const SoftLabelTable& table) {
  if (table.c < 1 || table.rows.size() != static_cast<size_t>(table.c) * table.c)
    throw std::invalid_argument("soft-label table: rows are not c x c");
  for (int i = 0; i < table.c; ++i) {
    double sum = 0.0;
    for (int j = 0; j < table.c; ++j) {
      const double v = table.at(i, j);
      if (!(v > 0.0))
        throw std::invalid_argument("soft-label table: entry (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") is not positive");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("soft-label table: row " + std::to_string(i) +
                                  " sums to " + format_double(sum));
    const double diag = table.at(i, i);
    for (int j = 0; j < table.c; ++j)
      if (j != i && !(diag > table.at(i, j)))
        throw std::invalid_argument("soft-label table: row " + std::to_string(i) +
                                    " argmax is not its diagonal");
  }
}

void save_soft_label_table(const SoftLabelTable& table, const std::string& path) {
  validate_soft_label_table(table);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write soft-label table: " + path);
  out << "c=" << table.c << " gamma=" << format_double(table.provenance.gamma)
      << " n=" << table.provenance.n << " seed=" << table.provenance.seed << "\n";
  for (int i = 0; i < table.c; ++i) {
    for (int j = 0; j < table.c; ++j) out << (j ? " " : "") << format_double(table.at(i, j));
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed writing soft-label table: " + path);
}

SoftLabelTable load_soft_label_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open soft-label table: " + path);
  std::string header;
  if (!std::getline(in, header))
    throw std::runtime_error(path + ": missing soft-label header line");

  SoftLabelTable table;
  int n = 0;
  double gamma = 0.0;
  uint64_t seed = 0;
  if (std::sscanf(header.c_str(), "c=%d gamma=%lf n=%d seed=%" SCNu64, &table.c, &gamma, &n,
                  &seed) != 4)
    throw std::runtime_error(path + ": malformed soft-label header: " + header);
  if (table.c < 1) throw std::runtime_error(path + ": non-positive class count");
  table.provenance.gamma = gamma;
  table.provenance.n = n;
  table.provenance.seed = seed;

  table.rows.reserve(static_cast<size_t>(table.c) * table.c);
  for (int i = 0; i < table.c; ++i) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated soft-label table");
    const char* p = line.c_str();
    for (int j = 0; j < table.c; ++j) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p)
        throw std::runtime_error(path + ": row " + std::to_string(i) + " has fewer than " +
                                 std::to_string(table.c) + " values");
      table.rows.push_back(v);
      p = end;
    }
    char* end = nullptr;
    std::strtod(p, &end);
    if (end != p)
      throw std::runtime_error(path + ": row " + std::to_string(i) + " has extra values");
  }
  validate_soft_label_table(table);
  return table;
}

}  // namespace reffakd
