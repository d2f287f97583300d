#include "refsr/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "refsr/checkpoint.hpp"
#include "refsr/errors.hpp"
#include "refsr/rng.hpp"

namespace refsr {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (std::string& s : out) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

}  // namespace

Manifest ingest_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("manifest not found: '" + path.string() + "'");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");

  static const char* kColumns[] = {"id", "image_path", "width_px", "height_px", "phys_width_in", "phys_height_in"};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("manifest '" + path.string() + "' is empty (missing header)");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* name : kColumns)
    if (!col.count(name)) throw FormatError("manifest header lacks column '" + std::string(name) + "'");

  Manifest m;
  const fs::path base = path.parent_path();
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    auto reject = [&](const std::string& why) {
      spdlog::warn("manifest {}:{}: row rejected: {}", path.string(), lineno, why);
      m.rejections.push_back({lineno, why});
    };
    if (f.size() < header.size()) {
      reject("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
      continue;
    }
    PaintingRecord r;
    r.id = f[col["id"]];
    const auto w = parse_number<int>(f[col["width_px"]]);
    const auto h = parse_number<int>(f[col["height_px"]]);
    const auto pw = parse_number<double>(f[col["phys_width_in"]]);
    const auto ph = parse_number<double>(f[col["phys_height_in"]]);
    if (r.id.empty()) {
      reject("empty id");
      continue;
    }
    if (f[col["image_path"]].empty()) {
      reject("empty image_path");
      continue;
    }
    if (!w || !h || *w <= 0 || *h <= 0) {
      reject("pixel dimensions must be positive integers");
      continue;
    }
    if (!pw || !ph || !std::isfinite(*pw) || !std::isfinite(*ph) || *pw <= 0.0 || *ph <= 0.0) {
      reject("physical size must be positive");
      continue;
    }
    r.image_path = fs::path(f[col["image_path"]]);
    if (r.image_path.is_relative()) r.image_path = base / r.image_path;
    r.width_px = *w;
    r.height_px = *h;
    r.phys_width_in = *pw;
    r.phys_height_in = *ph;
    r.ppi = r.width_px / r.phys_width_in;
    const double ppi_h = r.height_px / r.phys_height_in;
    if (std::abs(ppi_h - r.ppi) > kPpiAnamorphicTolerance * r.ppi)
      spdlog::warn("manifest {}:{}: '{}' width PPI {:.3f} and height PPI {:.3f} differ by more than {}%",
                   path.string(), lineno, r.id, r.ppi, ppi_h, kPpiAnamorphicTolerance * 100);
    m.records.push_back(std::move(r));
  }
  return m;
}

Split select_by_ppi(const std::vector<PaintingRecord>& records, double min_ppi, std::size_t n_train,
                    std::size_t n_test, std::uint64_t seed) {
  std::vector<PaintingRecord> pool;
  for (const PaintingRecord& r : records)
    if (r.ppi >= min_ppi) pool.push_back(r);
  if (n_train + n_test > pool.size())
    throw ArgumentError("select_by_ppi: need " + std::to_string(n_train) + " train + " + std::to_string(n_test) +
                        " test records with ppi >= " + std::to_string(min_ppi) + ", only " +
                        std::to_string(pool.size()) + " available");
  std::stable_sort(pool.begin(), pool.end(), [](const PaintingRecord& a, const PaintingRecord& b) {
    if (a.ppi != b.ppi) return a.ppi > b.ppi;
    return a.id < b.id;
  });
  Rng rng(seed);
  for (std::size_t i = 0; i < pool.size();) {
    std::size_t j = i + 1;
    while (j < pool.size() && pool[j].ppi == pool[i].ppi) ++j;
    rng.shuffle(pool.begin() + static_cast<std::ptrdiff_t>(i), pool.begin() + static_cast<std::ptrdiff_t>(j));
    i = j;
  }
  Split split;
  split.test.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.train.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_test),
                     pool.begin() + static_cast<std::ptrdiff_t>(n_test + n_train));
  return split;
}

std::vector<TrainingTriple> make_triples(const std::vector<PaintingRecord>& records, const TripleOptions& o) {
  if (o.s < 2 || (o.s & (o.s - 1)) != 0) throw ArgumentError("make_triples: s must be a power of two");
  if (o.tile_hr <= 0 || o.tile_hr % o.s != 0)
    throw ArgumentError("make_triples: tile_hr " + std::to_string(o.tile_hr) + " not divisible by s=" +
                        std::to_string(o.s));
  const int tile_ref = o.tile_ref == 0 ? o.tile_hr : o.tile_ref;
  if (tile_ref < o.tile_hr || tile_ref % o.s != 0)
    throw ArgumentError("make_triples: tile_ref must be >= tile_hr and divisible by s");
  if (o.tiles_per_painting < 1 || o.refs_per_tile < 1)
    throw ArgumentError("make_triples: tiles_per_painting and refs_per_tile must be positive");

  struct Source {
    const PaintingRecord* rec;
    ImageTensor img;
  };
  std::vector<Source> sources;
  for (const PaintingRecord& r : records) {
    ImageTensor img;
    try {
      img = load_image(r.image_path);
    } catch (const Error& e) {
      spdlog::warn("make_triples: skipping '{}': {}", r.id, e.what());
      continue;
    }
    if (img.channels == 1) {
      ImageTensor rgb(img.height, img.width, 3);
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
          for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = img.at(y, x, 0);
      img = std::move(rgb);
    }
    if (img.height < std::max(o.tile_hr, tile_ref) || img.width < std::max(o.tile_hr, tile_ref)) {
      spdlog::warn("make_triples: skipping '{}': {}x{} smaller than tile {}", r.id, img.height, img.width,
                   std::max(o.tile_hr, tile_ref));
      continue;
    }
    sources.push_back({&r, std::move(img)});
  }
  if (sources.size() < 2)
    throw ArgumentError("make_triples: no valid reference source (need at least two usable paintings, have " +
                        std::to_string(sources.size()) + ")");

  auto origin = [&](Rng& rng, int extent, int tile) {
    const int slots = (extent - tile) / o.s + 1;
    return static_cast<int>(rng.below(static_cast<std::uint64_t>(slots))) * o.s;
  };

  std::vector<TrainingTriple> out;
  for (std::size_t p = 0; p < sources.size(); ++p) {
    Rng rng(mix_seed(o.seed, p));
    const ImageTensor& img = sources[p].img;
    int tile_index = 0;
    for (int t = 0; t < o.tiles_per_painting; ++t) {
      const int y = origin(rng, img.height, o.tile_hr), x = origin(rng, img.width, o.tile_hr);
      ImageTensor hr = crop(img, y, x, o.tile_hr, o.tile_hr);
      ImageTensor lr = degrade_bicubic(hr, o.s);
      for (int k = 0; k < o.refs_per_tile; ++k) {
        std::size_t q = static_cast<std::size_t>(rng.below(sources.size() - 1));
        if (q >= p) ++q;
        const ImageTensor& other = sources[q].img;
        const int ry = origin(rng, other.height, tile_ref), rx = origin(rng, other.width, tile_ref);
        TrainingTriple tr;
        tr.painting_id = sources[p].rec->id;
        tr.tile_index = tile_index++;
        tr.ref_painting_id = sources[q].rec->id;
        tr.s = o.s;
        tr.hr = hr;
        tr.lr = lr;
        tr.ref = crop(other, ry, rx, tile_ref, tile_ref);
        out.push_back(std::move(tr));
      }
    }
  }
  return out;
}

void materialize_triples(const std::vector<TrainingTriple>& triples, const fs::path& dir) {
  fs::create_directories(dir);
  for (const TrainingTriple& t : triples) {
    const std::string stem = t.painting_id + "_" + std::to_string(t.tile_index) + "_";
    save_image(t.hr, dir / (stem + "hr.png"), 16);
    save_image(t.lr, dir / (stem + "lr.png"), 16);
    save_image(t.ref, dir / (stem + "ref.png"), 16);
  }
}

std::vector<TrainingTriple> load_triples(const fs::path& dir, int s) {
  if (!fs::is_directory(dir)) throw IoError("triple directory not found: '" + dir.string() + "'");
  std::vector<std::pair<std::pair<std::string, int>, fs::path>> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = "_hr.png";
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
      continue;
    const std::string stem = name.substr(0, name.size() - suffix.size());
    const auto us = stem.rfind('_');
    if (us == std::string::npos) continue;
    const auto idx = parse_number<int>(stem.substr(us + 1));
    if (!idx) continue;
    stems.push_back({{stem.substr(0, us), *idx}, dir / stem});
  }
  std::sort(stems.begin(), stems.end());
  std::vector<TrainingTriple> out;
  for (const auto& [key, stem] : stems) {
    TrainingTriple t;
    t.painting_id = key.first;
    t.tile_index = key.second;
    t.s = s;
    t.hr = load_image(stem.string() + "_hr.png");
    t.lr = load_image(stem.string() + "_lr.png");
    t.ref = load_image(stem.string() + "_ref.png");
    if (t.lr.height * s != t.hr.height || t.lr.width * s != t.hr.width)
      throw FormatError("triple '" + stem.string() + "': LR is not HR/" + std::to_string(s));
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<ReferenceGroup> load_grouped_refs(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("reference group root not found: '" + root.string() + "'");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<ReferenceGroup> out;
  for (const fs::path& d : dirs) {
    std::vector<fs::path> files{d / "hr.png"};
    for (int k = 0; k < kRefsPerGroup; ++k) files.push_back(d / ("ref_" + std::to_string(k) + ".png"));
    const auto missing = std::find_if(files.begin(), files.end(), [](const fs::path& f) { return !fs::exists(f); });
    if (missing != files.end()) {
      spdlog::warn("reference group '{}' skipped: missing {}", d.filename().string(), missing->filename().string());
      continue;
    }
    try {
      ReferenceGroup g;
      g.id = d.filename().string();
      g.hr = load_image(files[0]);
      for (int k = 0; k < kRefsPerGroup; ++k) g.refs.push_back(load_image(files[static_cast<std::size_t>(k) + 1]));
      out.push_back(std::move(g));
    } catch (const Error& e) {
      spdlog::warn("reference group '{}' skipped: {}", d.filename().string(), e.what());
    }
  }
  return out;
}

void write_split_file(const std::vector<PaintingRecord>& records, const fs::path& path) {
  std::ostringstream os;
  for (const PaintingRecord& r : records) os << r.id << '\n';
  const std::string s = os.str();
  write_file_atomic(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace refsr
