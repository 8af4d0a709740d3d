#include "litevsr/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "litevsr/ctc.hpp"
#include "litevsr/errors.hpp"
#include "litevsr/nn/ops.hpp"

namespace litevsr {

namespace fs = std::filesystem;
using nlohmann::json;

TokenSequence greedy_ctc_decode(const Eigen::Ref<const Matrix>& logits, int blank_id) {
  TokenSequence out;
  out.vocab_size = static_cast<int>(logits.cols()) - 1;
  int prev = -1;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    Eigen::Index best = 0;
    logits.row(t).maxCoeff(&best);
    const int id = static_cast<int>(best);
    if (id != prev && id != blank_id) out.ids.push_back(id);
    prev = id;
  }
  return out;
}

std::vector<std::string> normalize_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string word;
  while (ss >> word) {
    size_t b = 0;
    size_t e = word.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(word[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(word[e - 1]))) --e;
    if (b == e) continue;
    std::string w = word.substr(b, e - b);
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(std::move(w));
  }
  return out;
}

double wer(std::span<const std::string> ref_words, std::span<const std::string> hyp_words) {
  if (ref_words.empty()) throw DataError("wer: empty reference");
  return static_cast<double>(edit_distance(ref_words, hyp_words)) /
         static_cast<double>(ref_words.size());
}

double wer(const std::string& ref, const std::string& hyp) {
  const auto r = normalize_words(ref);
  const auto h = normalize_words(hyp);
  return wer(std::span<const std::string>(r), std::span<const std::string>(h));
}

namespace {

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

double cer(const std::string& ref, const std::string& hyp) {
  const std::string r = join_words(normalize_words(ref));
  const std::string h = join_words(normalize_words(hyp));
  if (r.empty()) throw DataError("cer: empty reference");
  return static_cast<double>(edit_distance(std::span<const char>(r), std::span<const char>(h))) /
         static_cast<double>(r.size());
}

VisualEncoder visual_encoder(const VisualBase& model) {
  return [&model](const TrainingExample& ex) {
    nn::NoGradGuard no_grad;
    return nn::to_matrix(model.forward(ex.clip));
  };
}

std::vector<SampleRecord> evaluate(std::span<const TrainingExample> examples,
                                   const VisualEncoder& encoder, const AudioHead& head,
                                   const NormalizationStats& stats, const Vocabulary& vocab) {
  if (stats.dim() != head.dim()) {
    throw DimensionError(fmt::format("stats dim {} vs head dim {}", stats.dim(), head.dim()));
  }
  std::vector<SampleRecord> records;
  records.reserve(examples.size());
  nn::NoGradGuard no_grad;
  for (const auto& ex : examples) {
    if (!ex.labeled) {
      throw DataError(fmt::format("evaluate: sample {} has no transcript", ex.sample_id));
    }
    SampleRecord r;
    r.sample_id = ex.sample_id;
    r.ref_text = ex.transcript;
    const Matrix v = encoder(ex);
    if (v.cols() != head.dim()) {
      throw DimensionError(fmt::format("sample {}: visual dim {} vs head dim {}", ex.sample_id,
                                       v.cols(), head.dim()));
    }
    if (ex.target) {
      const Eigen::Index len = std::min(v.rows(), ex.target->rows());
      if (len == 0) throw DataError(fmt::format("sample {}: no frames", ex.sample_id));
      r.enc_loss = (v.topRows(len) - ex.target->topRows(len)).squaredNorm() /
                   static_cast<double>(len * v.cols());
    }
    const Matrix logits =
        nn::to_matrix(head.forward(nn::from_matrix(denormalize(v, stats))));
    const auto tokens = ex.tokens.empty() ? vocab.encode(ex.transcript).ids : ex.tokens;
    r.ctc_loss_raw = ctc_forward_backward(logits, tokens, head.blank_id()).nll;
    r.ctc_loss = r.ctc_loss_raw / static_cast<double>(logits.rows());
    r.hyp_text = vocab.decode(greedy_ctc_decode(logits, head.blank_id()).ids);
    r.wer = wer(r.ref_text, r.hyp_text);
    r.cer = cer(r.ref_text, r.hyp_text);
    records.push_back(std::move(r));
  }
  return records;
}

RegressionResult linear_regression(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DimensionError("linear_regression: xs and ys differ in length");
  const auto n = static_cast<int>(xs.size());
  if (n < 2) throw DataError("linear_regression: needs at least two points");
  double mx = 0.0;
  double my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw DataError("linear_regression: all x values are equal");
  RegressionResult r;
  r.n = n;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  r.pearson_r = syy > 0.0 ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0) : 0.0;
  return r;
}

CorrelationReport correlation_report(std::span<const SampleRecord> records) {
  std::vector<double> enc;
  std::vector<double> ctc;
  std::vector<double> w;
  for (const auto& r : records) {
    if (!r.enc_loss) continue;
    enc.push_back(*r.enc_loss);
    ctc.push_back(r.ctc_loss);
    w.push_back(r.wer);
  }
  if (enc.size() < 2) {
    throw DataError("correlation_report: needs at least two records with an encoding loss");
  }
  return {linear_regression(enc, ctc), linear_regression(enc, w)};
}

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  return out;
}

std::string opt_number(const std::optional<double>& v) {
  return v ? fmt::format("{:.10g}", *v) : std::string();
}

}  // namespace

void write_scatter_csv(const fs::path& path, std::span<const SampleRecord> records) {
  auto out = open_out(path);
  out << "sample_id,enc_loss,ctc_loss,wer\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{:.10g},{:.10g}\n", csv_quote(r.sample_id), opt_number(r.enc_loss),
                       r.ctc_loss, r.wer);
  }
}

void write_correlation_json(const fs::path& path, const CorrelationReport& report) {
  auto pair = [](const RegressionResult& r) {
    return json{{"slope", r.slope}, {"intercept", r.intercept}, {"r", r.pearson_r}, {"n", r.n}};
  };
  auto out = open_out(path);
  out << json{{"pairs", {{"enc_ctc", pair(report.enc_ctc)}, {"enc_wer", pair(report.enc_wer)}}}}
             .dump(2)
      << '\n';
}

void write_records_csv(const fs::path& path, std::span<const SampleRecord> records) {
  auto out = open_out(path);
  out << "sample_id,enc_loss,ctc_loss,ctc_loss_raw,wer,cer,ref_text,hyp_text\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", csv_quote(r.sample_id),
                       r.enc_loss ? fmt::format("{:.17g}", *r.enc_loss) : std::string(),
                       r.ctc_loss, r.ctc_loss_raw, r.wer, r.cer, csv_quote(r.ref_text),
                       csv_quote(r.hyp_text));
  }
}

std::vector<SampleRecord> read_records_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  std::string line;
  std::getline(in, line);
  if (line.rfind("sample_id,enc_loss,ctc_loss", 0) != 0) {
    throw DataError(fmt::format("{}: not a per-sample records file", path.string()));
  }
  std::vector<SampleRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = csv_split(line);
    if (f.size() != 8) {
      throw DataError(fmt::format("{}:{}: expected 8 columns, got {}", path.string(), lineno,
                                  f.size()));
    }
    try {
      SampleRecord r;
      r.sample_id = f[0];
      if (!f[1].empty()) r.enc_loss = std::stod(f[1]);
      r.ctc_loss = std::stod(f[2]);
      r.ctc_loss_raw = std::stod(f[3]);
      r.wer = std::stod(f[4]);
      r.cer = std::stod(f[5]);
      r.ref_text = f[6];
      r.hyp_text = f[7];
      out.push_back(std::move(r));
    } catch (const std::exception&) {
      throw DataError(fmt::format("{}:{}: malformed number", path.string(), lineno));
    }
  }
  return out;
}

double mean_wer(std::span<const SampleRecord> records) {
  if (records.empty()) throw DataError("mean_wer: no records");
  double total = 0.0;
  for (const auto& r : records) total += r.wer;
  return total / static_cast<double>(records.size());
}

}  // namespace litevsr
