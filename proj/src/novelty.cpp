#include "mario/novelty.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mario/error.hpp"

namespace mario {

BehaviorCharacteristic behavior_characteristic(const Path& path, int width, int height) {
  std::vector<double> sum(static_cast<std::size_t>(width), 0.0);
  std::vector<int> count(static_cast<std::size_t>(width), 0);
  for (const Point& p : path) {
    if (p.x < 0 || p.x >= width) continue;
    sum[p.x] += p.y;
    ++count[p.x];
  }
  const auto first = std::find_if(count.begin(), count.end(), [](int n) { return n > 0; });
  if (first == count.end()) throw Error(ErrorCode::NoPath, "level has no path tiles");

  std::vector<double> filled(static_cast<std::size_t>(width));
  double last = sum[first - count.begin()] / *first;
  for (int c = 0; c < width; ++c) {
    if (count[c] > 0) last = sum[c] / count[c];
    filled[c] = last;
  }
  const int half = kBcSmoothingWindow / 2;
  BehaviorCharacteristic bc(static_cast<std::size_t>(width));
  for (int c = 0; c < width; ++c) {
    const int lo = std::max(0, c - half), hi = std::min(width - 1, c + half);
    double s = 0.0;
    for (int j = lo; j <= hi; ++j) s += filled[j];
    bc[c] = s / (hi - lo + 1) / (height - 1);
  }
  return bc;
}

BehaviorCharacteristic behavior_characteristic(const LevelGrid& level) {
  return behavior_characteristic(extract_predicted_path(level), level.width(), level.height());
}

double euclidean_distance(const BehaviorCharacteristic& a, const BehaviorCharacteristic& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "behavior characteristics differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double novelty_score(const BehaviorCharacteristic& bc, std::span<const BehaviorCharacteristic> others, int k,
                     const BcDistance& distance) {
  if (others.empty()) throw Error(ErrorCode::EmptyArchive, "novelty needs at least one archive member");
  if (k < 1) throw Error(ErrorCode::BadConfig, "k must be >= 1");
  std::vector<double> d;
  d.reserve(others.size());
  for (const auto& o : others) d.push_back(distance(bc, o));
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k), d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n), d.end());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += d[i];
  return s / static_cast<double>(n);
}

void NsConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::BadConfig, why); };
  if (init_size < 2) fail("init_size must be >= 2");
  if (k < 1) fail("k must be >= 1");
  if (iterations < 0) fail("iterations must be >= 0");
  if (!(parent_fraction > 0.0 && parent_fraction <= 1.0)) fail("parent_fraction must be in (0, 1]");
  if (slice_min < 1 || slice_max < slice_min) fail("slice bounds must satisfy 1 <= min <= max");
  if (level_columns < slice_max) fail("level_columns must be >= slice_max");
  if (seam_columns < 0 || seam_columns % 2 != 0) fail("seam_columns must be even and >= 0");
  if (context_columns < 1) fail("context_columns must be >= 1");
  if (infill_window_columns <= seam_columns) fail("infill window must be wider than the seam");
  if (init_attempts < 1) fail("init_attempts must be >= 1");
}

nlohmann::json to_json(const NsConfig& c) {
  return {{"init_size", c.init_size},
          {"level_columns", c.level_columns},
          {"k", c.k},
          {"iterations", c.iterations},
          {"parent_fraction", c.parent_fraction},
          {"slice_min", c.slice_min},
          {"slice_max", c.slice_max},
          {"seam_columns", c.seam_columns},
          {"context_columns", c.context_columns},
          {"infill_window_columns", c.infill_window_columns},
          {"accept", c.accept == AcceptRule::ExceedMinimum ? "min" : "mean"},
          {"init_attempts", c.init_attempts},
          {"seed", c.seed}};
}

LevelGrid ModelGenerator::generate(const LevelGrid& context, const PromptSpec& prompt, int columns, Rng& rng) {
  return generate_columns(params_, vocab_, context, prompt, columns, options_, rng);
}

LevelGrid ModelInfiller::infill(const LevelGrid& level, int begin, int end) {
  return infill_columns(params_, vocab_, level, begin, end, window_columns_);
}

Mutation mutate(const LevelGrid& parent, LevelGenerator& generator, SeamInfiller& infiller, Rng& rng,
                const NsConfig& config) {
  const int width = parent.width();
  if (width < config.slice_max) {
    throw Error(ErrorCode::ParentTooNarrow, "parent of width " + std::to_string(width) + " is narrower than " +
                                                std::to_string(config.slice_max) + " columns");
  }
  Mutation m;
  MutationRecord& rec = m.record;
  rec.slice_width = static_cast<int>(uniform_int(rng, config.slice_min, config.slice_max));
  rec.slice_start = static_cast<int>(uniform_int(rng, 0, width - rec.slice_width));
  rec.prompt = random_prompt(rng);
  const int s = rec.slice_start, w = rec.slice_width;

  LevelGrid context = canonical_seed_column();
  if (s > 0) {
    const int n = std::min(s, config.context_columns);
    context = slice(parent, s - n, n);
  }
  const LevelGrid fresh = generator.generate(context, rec.prompt, w, rng);
  if (fresh.width() != w) throw Error(ErrorCode::ShapeMismatch, "generator returned the wrong number of columns");

  std::vector<LevelGrid> parts;
  if (s > 0) parts.push_back(slice(parent, 0, s));
  parts.push_back(fresh);
  if (s + w < width) parts.push_back(slice(parent, s + w, width - s - w));
  m.child = stitch(parts);

  const int half = config.seam_columns / 2;
  for (int junction : {s, s + w}) {
    if (junction <= 0 || junction >= width || config.seam_columns == 0) continue;
    const int b = std::max(0, junction - half), e = std::min(width, junction + half);
    m.child = infiller.infill(m.child, b, e);
  }
  rec.changed_begin = std::max(0, s - half);
  rec.changed_end = std::min(width, s + w + half);
  return m;
}

double coverage(std::span<const Elite> elites, int columns) {
  if (elites.empty()) throw Error(ErrorCode::EmptyArchive, "coverage of an empty archive");
  std::vector<bool> hit(static_cast<std::size_t>(kLevelHeight) * columns, false);
  for (const Elite& e : elites) {
    for (const Point& p : extract_predicted_path(e.level)) {
      if (p.x < columns) hit[static_cast<std::size_t>(p.y) * columns + p.x] = true;
    }
  }
  const auto filled = std::count(hit.begin(), hit.end(), true);
  return static_cast<double>(filled) / static_cast<double>(hit.size());
}

std::vector<double> current_novelty(std::span<const Elite> elites, int k) {
  std::vector<double> out;
  std::vector<BehaviorCharacteristic> others;
  for (std::size_t i = 0; i < elites.size(); ++i) {
    others.clear();
    for (std::size_t j = 0; j < elites.size(); ++j) {
      if (j != i) others.push_back(elites[j].bc);
    }
    out.push_back(others.empty() ? 0.0 : novelty_score(elites[i].bc, others, k));
  }
  return out;
}

NsRun ns_run(const NsConfig& config, LevelGenerator& generator, SeamInfiller& infiller,
             const MutationObserver& observer) {
  config.validate();
  Rng rng(config.seed);
  NsRun run;
  const LevelGrid seed = canonical_seed_column();

  for (int i = 0; i < config.init_size; ++i) {
    bool added = false;
    for (int attempt = 0; attempt < config.init_attempts && !added; ++attempt) {
      const PromptSpec prompt = random_prompt(rng);
      const std::array<LevelGrid, 2> parts = {seed,
                                              generator.generate(seed, prompt, config.level_columns - seed.width(), rng)};
      LevelGrid level = stitch(parts);
      try {
        Elite e;
        e.bc = behavior_characteristic(level);
        e.id = static_cast<int>(run.elites.size());
        e.level = std::move(level);
        e.prompt = prompt;
        run.elites.push_back(std::move(e));
        added = true;
      } catch (const Error& err) {
        if (err.code() != ErrorCode::NoPath) throw;
      }
    }
    if (!added) {
      throw Error(ErrorCode::NoPath, "could not sample an initial level with a path after " +
                                         std::to_string(config.init_attempts) + " attempts");
    }
  }
  const auto initial = current_novelty(run.elites, config.k);
  for (std::size_t i = 0; i < run.elites.size(); ++i) run.elites[i].novelty_at_insertion = initial[i];
  run.coverage_curve.push_back({run.elites.size(), coverage(run.elites, config.level_columns)});

  std::vector<BehaviorCharacteristic> bcs;
  for (const Elite& e : run.elites) bcs.push_back(e.bc);

  for (int it = 0; it < config.iterations; ++it) {
    const auto novelty = current_novelty(run.elites, config.k);
    std::vector<int> order(run.elites.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return novelty[a] > novelty[b]; });
    const int top = std::max(1, static_cast<int>(std::ceil(config.parent_fraction * static_cast<double>(order.size()))));
    const Elite& parent = run.elites[order[uniform_int(rng, 0, top - 1)]];

    Mutation m = mutate(parent.level, generator, infiller, rng, config);
    if (observer) observer(parent.level, m);

    AcceptanceEvent ev;
    ev.iteration = it;
    ev.parent_id = parent.id;
    ev.mutation = m.record;
    double threshold = std::numeric_limits<double>::infinity();
    if (config.accept == AcceptRule::ExceedMinimum) {
      for (const Elite& e : run.elites) threshold = std::min(threshold, e.novelty_at_insertion);
    } else {
      double s = 0.0;
      for (const Elite& e : run.elites) s += e.novelty_at_insertion;
      threshold = s / static_cast<double>(run.elites.size());
    }
    ev.threshold = threshold;

    std::optional<BehaviorCharacteristic> bc;
    try {
      bc = behavior_characteristic(m.child);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::NoPath) throw;
    }
    if (bc) {
      ev.novelty = novelty_score(*bc, bcs, config.k);
      ev.accepted = *ev.novelty > threshold;
    }
    if (ev.accepted) {
      Elite e;
      e.id = static_cast<int>(run.elites.size());
      e.parent_id = parent.id;
      e.level = std::move(m.child);
      e.prompt = m.record.prompt;
      e.bc = *bc;
      e.novelty_at_insertion = *ev.novelty;
      ev.child_id = e.id;
      bcs.push_back(e.bc);
      run.elites.push_back(std::move(e));
      run.coverage_curve.push_back({run.elites.size(), coverage(run.elites, config.level_columns)});
    }
    run.log.push_back(std::move(ev));
  }
  return run;
}

std::string export_bcs(std::span<const Elite> elites) {
  if (elites.empty()) throw Error(ErrorCode::EmptyArchive, "no elites to export");
  std::string out;
  char buf[40];
  for (const Elite& e : elites) {
    for (std::size_t i = 0; i < e.bc.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", e.bc[i]);
      if (i > 0) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::vector<BehaviorCharacteristic> import_bcs(std::string_view csv) {
  std::vector<BehaviorCharacteristic> rows;
  std::istringstream in{std::string(csv)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    BehaviorCharacteristic row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error(ErrorCode::BadFormat, "bad BC value '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

nlohmann::json to_json(const MutationRecord& r) {
  return {{"slice_start", r.slice_start},
          {"slice_width", r.slice_width},
          {"changed_begin", r.changed_begin},
          {"changed_end", r.changed_end},
          {"prompt", compose_prompt(r.prompt)}};
}

}  // namespace

void save_archive(const std::filesystem::path& dir, const NsRun& run, const nlohmann::json& manifest_extra) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (const Elite& e : run.elites) {
    std::snprintf(name, sizeof(name), "elite_%04d", e.id);
    save_level_file(dir / (std::string(name) + ".txt"), e.level);
    nlohmann::json meta = {{"id", e.id},
                           {"parent", e.parent_id ? nlohmann::json(*e.parent_id) : nlohmann::json(nullptr)},
                           {"prompt", compose_prompt(e.prompt)},
                           {"novelty_at_insertion", e.novelty_at_insertion},
                           {"bc", e.bc}};
    write_text_file(dir / (std::string(name) + ".json"), meta.dump(2) + "\n");
  }
  nlohmann::json log = nlohmann::json::array();
  for (const auto& ev : run.log) {
    log.push_back({{"iteration", ev.iteration},
                   {"parent", ev.parent_id},
                   {"accepted", ev.accepted},
                   {"novelty", ev.novelty ? nlohmann::json(*ev.novelty) : nlohmann::json(nullptr)},
                   {"threshold", ev.threshold},
                   {"child", ev.child_id ? nlohmann::json(*ev.child_id) : nlohmann::json(nullptr)},
                   {"mutation", to_json(ev.mutation)}});
  }
  nlohmann::json manifest = manifest_extra;
  manifest["elites"] = run.elites.size();
  manifest["acceptance_log"] = std::move(log);
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

  std::ostringstream cov;
  cov.precision(10);
  cov << "archive_size,coverage\n";
  for (const auto& p : run.coverage_curve) cov << p.archive_size << ',' << p.coverage << '\n';
  write_text_file(dir / "coverage.csv", cov.str());
  write_text_file(dir / "bcs.csv", export_bcs(run.elites));
}

}  // namespace mario
