#include "kanerva/data.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "kanerva/binary_io.hpp"
#include "kanerva/errors.hpp"

namespace kanerva::data {

namespace {

LabelledPatterns draw_glyphs(const GlyphConfig& c, const Matrix& prototypes, Index count, Rng& rng) {
  const int scale = c.side / c.prototype_side;
  std::uniform_int_distribution<int> pick_class(0, c.classes - 1);
  std::bernoulli_distribution flip(c.flip);
  LabelledPatterns out{Matrix(count, c.side * c.side), std::vector<int>(static_cast<std::size_t>(count))};
  for (Index n = 0; n < count; ++n) {
    const int label = pick_class(rng);
    out.labels[static_cast<std::size_t>(n)] = label;
    for (int r = 0; r < c.side; ++r)
      for (int col = 0; col < c.side; ++col) {
        double bit = prototypes(label, (r / scale) * c.prototype_side + col / scale);
        if (flip(rng)) bit = 1.0 - bit;
        out.patterns(n, r * c.side + col) = bit;
      }
  }
  return out;
}

std::uint32_t read_be32(io::Reader& in) {
  const auto b = in.bytes(4);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace

Matrix glyph_prototypes(const GlyphConfig& c, std::uint64_t seed) {
  if (c.prototype_side <= 0 || c.side % c.prototype_side != 0)
    throw ConfigError("glyph side must be a multiple of the prototype side");
  if (c.classes <= 0) throw ConfigError("glyph classes must be positive");
  Rng rng = make_rng(seed, "glyphs.prototypes");
  std::bernoulli_distribution coin(0.5);
  const int cells = c.prototype_side * c.prototype_side;
  Matrix protos(c.classes, cells);
  std::set<std::vector<int>> seen;
  for (int k = 0; k < c.classes; ++k) {
    // Redraw duplicates so every class is distinguishable.
    for (int attempt = 0;; ++attempt) {
      std::vector<int> bits(static_cast<std::size_t>(cells));
      for (auto& b : bits) b = coin(rng);
      if (seen.insert(bits).second || attempt > 100) {
        for (int i = 0; i < cells; ++i) protos(k, i) = bits[static_cast<std::size_t>(i)];
        break;
      }
    }
  }
  return protos;
}

Dataset make_glyphs(const GlyphConfig& c, std::uint64_t seed) {
  if (!(c.flip >= 0.0 && c.flip <= 1.0)) throw ConfigError("glyph flip probability must lie in [0, 1]");
  const Matrix protos = glyph_prototypes(c, seed);
  Rng train_rng = make_rng(seed, "glyphs.train");
  Rng test_rng = make_rng(seed, "glyphs.test");
  return {draw_glyphs(c, protos, c.train, train_rng), draw_glyphs(c, protos, c.test, test_rng)};
}

Episode sample_episode(const LabelledPatterns& source, Index T, std::optional<int> class_count, Rng& rng) {
  if (source.size() == 0) throw EmptyDataset("sample_episode: dataset is empty");
  if (T < 0) throw ConfigError("sample_episode: T must be nonnegative");
  std::vector<Index> pool;
  if (class_count) {
    if (source.labels.size() != static_cast<std::size_t>(source.size()))
      throw ConfigError("sample_episode: class restriction needs labels");
    std::vector<int> classes(source.labels);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (*class_count <= 0 || *class_count > static_cast<int>(classes.size()))
      throw ConfigError("sample_episode: class count out of range");
    std::shuffle(classes.begin(), classes.end(), rng);
    const std::set<int> chosen(classes.begin(), classes.begin() + *class_count);
    for (Index i = 0; i < source.size(); ++i)
      if (chosen.contains(source.labels[static_cast<std::size_t>(i)])) pool.push_back(i);
  } else {
    pool.resize(static_cast<std::size_t>(source.size()));
    std::iota(pool.begin(), pool.end(), Index{0});
  }

  std::vector<Index> picks;
  if (T <= static_cast<Index>(pool.size())) {
    // Partial Fisher-Yates over the pool.
    for (Index i = 0; i < T; ++i) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
      picks.push_back(pool[static_cast<std::size_t>(i)]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (Index i = 0; i < T; ++i) picks.push_back(pool[pick(rng)]);
  }

  Episode ep{Matrix(T, source.dim()), {}};
  for (Index i = 0; i < T; ++i) {
    const Index src = picks[static_cast<std::size_t>(i)];
    ep.patterns.row(i) = source.patterns.row(src);
    if (!source.labels.empty()) ep.labels.push_back(source.labels[static_cast<std::size_t>(src)]);
  }
  return ep;
}

void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  if (d.train.dim() != d.test.dim() && d.test.size() > 0) throw ConfigError("save_dataset: split dimensions differ");
  const Index count = d.train.size() + d.test.size();
  io::Writer out(path);
  out.magic("KDS1");
  out.u32(static_cast<std::uint32_t>(count));
  out.u32(static_cast<std::uint32_t>(d.dim()));
  out.u32(static_cast<std::uint32_t>(d.train.size()));
  std::vector<std::uint8_t> row(static_cast<std::size_t>(d.dim()));
  for (const auto* split : {&d.train, &d.test})
    for (Index n = 0; n < split->size(); ++n) {
      for (Index i = 0; i < d.dim(); ++i) row[static_cast<std::size_t>(i)] = split->patterns(n, i) > 0.5 ? 1 : 0;
      out.bytes(row);
    }
  std::vector<std::uint8_t> labels;
  for (const auto* split : {&d.train, &d.test})
    for (Index n = 0; n < split->size(); ++n)
      labels.push_back(split->labels.empty() ? 0 : static_cast<std::uint8_t>(split->labels[static_cast<std::size_t>(n)]));
  out.bytes(labels);
  out.finish();
}

Dataset load_dataset(const std::filesystem::path& path) {
  io::Reader in(path);
  in.expect_magic("KDS1");
  const Index count = in.u32();
  const Index dim = in.u32();
  const Index train = in.u32();
  if (train > count) throw IoError(path.string() + ": train count exceeds pattern count");
  if (in.remaining() != static_cast<std::size_t>(count * (dim + 1))) throw IoError(path.string() + ": size mismatch");
  Matrix all(count, dim);
  for (Index n = 0; n < count; ++n) {
    const auto row = in.bytes(static_cast<std::size_t>(dim));
    for (Index i = 0; i < dim; ++i) all(n, i) = row[static_cast<std::size_t>(i)];
  }
  const auto labels = in.bytes(static_cast<std::size_t>(count));
  Dataset d;
  d.train.patterns = all.topRows(train);
  d.test.patterns = all.bottomRows(count - train);
  d.train.labels.assign(labels.begin(), labels.begin() + train);
  d.test.labels.assign(labels.begin() + train, labels.end());
  return d;
}

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels,
                 Index train_count, int threshold) {
  io::Reader img(images);
  if (read_be32(img) != 0x00000803) throw IoError(images.string() + ": not an IDX3 ubyte image file");
  const Index n = read_be32(img);
  const Index rows = read_be32(img);
  const Index cols = read_be32(img);
  Matrix all(n, rows * cols);
  for (Index i = 0; i < n; ++i) {
    const auto px = img.bytes(static_cast<std::size_t>(rows * cols));
    for (Index j = 0; j < rows * cols; ++j) all(i, j) = px[static_cast<std::size_t>(j)] > threshold ? 1.0 : 0.0;
  }
  std::vector<int> lab(static_cast<std::size_t>(n), 0);
  if (labels) {
    io::Reader lr(*labels);
    if (read_be32(lr) != 0x00000801) throw IoError(labels->string() + ": not an IDX1 ubyte label file");
    if (read_be32(lr) != static_cast<std::uint32_t>(n)) throw IoError(labels->string() + ": label count mismatch");
    const auto b = lr.bytes(static_cast<std::size_t>(n));
    std::copy(b.begin(), b.end(), lab.begin());
  }
  train_count = std::clamp<Index>(train_count, 0, n);
  Dataset d;
  d.train.patterns = all.topRows(train_count);
  d.test.patterns = all.bottomRows(n - train_count);
  d.train.labels.assign(lab.begin(), lab.begin() + train_count);
  d.test.labels.assign(lab.begin() + train_count, lab.end());
  return d;
}

}  // namespace kanerva::data
