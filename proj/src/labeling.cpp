#include "tram/labeling.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

#include "tram/io.hpp"

namespace tram {

const std::array<double, 3>& UserMeans::at(const std::string& user_id) const {
  const auto it = per_user.find(user_id);
  if (it == per_user.end()) throw std::out_of_range("no mean responses for user '" + user_id + "'");
  return it->second;
}

double UserMeans::threshold(const std::string& user_id, int question) const {
  const auto it = per_user.find(user_id);
  const auto& means = it == per_user.end() ? global : it->second;
  return means.at(static_cast<std::size_t>(question));
}

void UserMeans::save(const std::filesystem::path& path) const {
  nlohmann::json doc;
  doc["format"] = "tram-user-means";
  doc["version"] = 1;
  doc["global"] = global;
  doc["per_user"] = nlohmann::json::object();
  for (const auto& [user, means] : per_user) doc["per_user"][user] = means;
  io::write_atomically(path, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
}

UserMeans UserMeans::load(const std::filesystem::path& path) {
  const auto doc = nlohmann::json::parse(io::read_file(path));
  if (doc.value("format", "") != "tram-user-means" || doc.value("version", 0) != 1) {
    throw std::runtime_error(path.string() + ": not a version-1 user means file");
  }
  UserMeans means;
  means.global = doc.at("global").get<std::array<double, 3>>();
  for (const auto& [user, values] : doc.at("per_user").items()) {
    means.per_user[user] = values.get<std::array<double, 3>>();
  }
  return means;
}

UserMeans compute_user_means(const std::vector<SurveyResponse>& responses) {
  std::map<std::string, std::pair<std::array<double, 3>, std::size_t>> sums;
  std::array<double, 3> global_sum{};
  for (const auto& r : responses) {
    auto& [sum, count] = sums[r.user_id];
    for (int q = 0; q < 3; ++q) {
      sum[static_cast<std::size_t>(q)] += r.question(q);
      global_sum[static_cast<std::size_t>(q)] += r.question(q);
    }
    ++count;
  }
  UserMeans means;
  for (const auto& [user, entry] : sums) {
    const auto& [sum, count] = entry;
    auto& m = means.per_user[user];
    for (std::size_t q = 0; q < 3; ++q) m[q] = sum[q] / static_cast<double>(count);
  }
  if (!responses.empty()) {
    for (std::size_t q = 0; q < 3; ++q) {
      means.global[q] = global_sum[q] / static_cast<double>(responses.size());
    }
  }
  return means;
}

SLabels s_labels(const SleepSession& s) {
  const std::int64_t total = s.deepsleepduration + s.lightsleepduration + s.remsleepduration;
  SLabels out;
  out.s1 = (kMinTotalSleep < total && total < kMaxTotalSleep) ? 1 : 0;
  const std::int64_t in_bed = s.wakeupduration + total;
  if (in_bed > 0) {
    const double efficiency = static_cast<double>(total) / static_cast<double>(in_bed) * 100.0;
    out.s2 = efficiency > kMinEfficiencyPercent ? 1 : 0;
  }
  out.s3 = s.durationtosleep < kMaxOnsetLatency ? 1 : 0;
  const std::int64_t waso = s.wakeupduration - s.durationtosleep - s.durationtowakeup;
  out.s4 = waso < kMaxWakeAfterOnset ? 1 : 0;
  return out;
}

LabelVector label_all(const UserDay& user_day, const std::optional<SurveyResponse>& survey,
                      const std::optional<SleepSession>& session, const UserMeans& means) {
  if (!survey) throw std::invalid_argument("missing survey response for " + user_day.to_string());
  if (!session) throw std::invalid_argument("missing sleep session for " + user_day.to_string());
  if (survey->key() != user_day || session->key() != user_day) {
    throw std::invalid_argument("records do not belong to " + user_day.to_string());
  }
  const auto& mu = means.at(user_day.user_id);
  LabelVector labels{user_day, {}};
  for (int q = 0; q < 3; ++q) {
    labels.values[static_cast<std::size_t>(q)] =
        q_label(survey->question(q), mu[static_cast<std::size_t>(q)]);
  }
  const auto s = s_labels(*session);
  labels.values[3] = s.s1;
  labels.values[4] = s.s2;
  labels.values[5] = s.s3;
  labels.values[6] = s.s4;
  return labels;
}

void write_labels_file(const std::filesystem::path& path, const std::vector<LabelVector>& labels) {
  io::write_atomically(path, [&](std::ostream& out) {
    out << "user_id,date";
    for (const auto* name : kLabelNames) out << ',' << name;
    out << '\n';
    for (const auto& l : labels) {
      out << l.user_day.user_id << ',' << l.user_day.date.to_string();
      for (int v : l.values) out << ',' << v;
      out << '\n';
    }
  });
}

std::vector<LabelVector> read_labels_file(const std::filesystem::path& path) {
  io::CsvReader reader(path);
  std::vector<std::string> fields;
  if (!reader.next(fields)) throw ParseError(path.string(), 0, "empty file");
  std::vector<std::string> header{"user_id", "date"};
  for (const auto* name : kLabelNames) header.emplace_back(name);
  if (fields != header) {
    throw ParseError(path.string(), reader.line_number(),
                     "expected header 'user_id,date,Q1,Q2,Q3,S1,S2,S3,S4'");
  }
  std::vector<LabelVector> labels;
  while (reader.next(fields)) {
    if (fields.size() != header.size()) {
      throw ParseError(path.string(), reader.line_number(), "wrong column count");
    }
    LabelVector l;
    try {
      l.user_day = {fields[0], Date::parse(fields[1])};
      for (std::size_t i = 0; i < kNumLabels; ++i) {
        const auto v = io::parse_int(fields[2 + i]);
        if (v != 0 && v != 1) throw std::invalid_argument("label must be 0 or 1");
        l.values[i] = static_cast<int>(v);
      }
    } catch (const std::invalid_argument& e) {
      throw ParseError(path.string(), reader.line_number(), e.what());
    }
    labels.push_back(std::move(l));
  }
  return labels;
}

}  // namespace tram
