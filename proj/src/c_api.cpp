#include "wdistill/wdistill.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "checkpoint.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "metrics.hpp"

struct wd_model {
  wdistill::SavedModel saved;
};

struct wd_corpus {
  wdistill::Corpus corpus;
};

namespace {

thread_local std::string last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

wd_status fail(wd_status code, const std::string& message) {
  last_error = message;
  return code;
}

template <typename F>
wd_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return WD_OK;
  } catch (const wdistill::ConfigError& e) {
    return fail(WD_ERR_CONFIG, e.what());
  } catch (const wdistill::ShapeError& e) {
    return fail(WD_ERR_SHAPE, e.what());
  } catch (const wdistill::NumericError& e) {
    return fail(WD_ERR_NUMERIC, e.what());
  } catch (const wdistill::IoError& e) {
    return fail(WD_ERR_IO, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(WD_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(WD_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(WD_ERR_RUNTIME, "unknown error");
  }
}

wdistill::ExperimentConfig parse_config(const char* config_json) {
  if (!config_json || !*config_json) return wdistill::ExperimentConfig::from_json(nlohmann::json::object());
  return wdistill::ExperimentConfig::from_json(nlohmann::json::parse(config_json));
}

}  // namespace

extern "C" {

const char* wd_last_error(void) { return last_error.c_str(); }

const char* wd_version(void) { return "1.0.0"; }

wd_status wd_set_log_level(const char* level) {
  if (!level) return fail(WD_ERR_INVALID_ARGUMENT, "level is null");
  const std::string l = level;
  if (l == "off") spdlog::set_level(spdlog::level::off);
  else if (l == "error") spdlog::set_level(spdlog::level::err);
  else if (l == "warn") spdlog::set_level(spdlog::level::warn);
  else if (l == "info") spdlog::set_level(spdlog::level::info);
  else if (l == "debug") spdlog::set_level(spdlog::level::debug);
  else return fail(WD_ERR_INVALID_ARGUMENT, "unknown log level '" + l + "'");
  last_error.clear();
  return WD_OK;
}

void wd_string_free(char* s) { std::free(s); }

wd_status wd_run_command(const char* command, const char* config_json, char** report_json) {
  if (!command) return fail(WD_ERR_INVALID_ARGUMENT, "command is null");
  const auto& names = wdistill::command_names();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    return fail(WD_ERR_INVALID_ARGUMENT, std::string("unknown command '") + command + "'");
  }
  if (report_json) *report_json = nullptr;
  return guarded([&] {
    const auto report = wdistill::run_command(command, parse_config(config_json));
    if (report_json) *report_json = dup_string(report.dump(2));
  });
}

wd_status wd_resolve_config(const char* config_json, char** resolved_json) {
  if (!resolved_json) return fail(WD_ERR_INVALID_ARGUMENT, "resolved_json is null");
  return guarded([&] { *resolved_json = dup_string(parse_config(config_json).to_json().dump(2)); });
}

wd_status wd_model_load(const char* path, wd_model** out) {
  if (!path || !out) return fail(WD_ERR_INVALID_ARGUMENT, "path and out must be non-null");
  *out = nullptr;
  return guarded([&] {
    auto m = std::make_unique<wd_model>();
    m->saved = wdistill::load_model(path);
    m->saved.params = m->saved.params.clone(false);
    *out = m.release();
  });
}

void wd_model_free(wd_model* model) { delete model; }

wd_status wd_model_info(const wd_model* model, char** info_json) {
  if (!model || !info_json) return fail(WD_ERR_INVALID_ARGUMENT, "model and info_json must be non-null");
  return guarded([&] {
    const nlohmann::json j = {{"config", wdistill::model_config_to_json(model->saved.config)},
                              {"params", model->saved.params.total_elements()},
                              {"meta", model->saved.meta}};
    *info_json = dup_string(j.dump(2));
  });
}

wd_status wd_model_decode(const wd_model* model, const int32_t* src, size_t src_len, int32_t* out, size_t capacity,
                          size_t* out_len) {
  if (!model || !out_len || (src_len && !src) || (capacity && !out)) {
    return fail(WD_ERR_INVALID_ARGUMENT, "null pointer argument");
  }
  return guarded([&] {
    std::vector<int> s(src, src + src_len);
    const auto& cfg = model->saved.config;
    const auto hyp = wdistill::greedy_decode(model->saved.params, cfg, wdistill::TokenGrid::from_sequences({s}),
                                             cfg.max_len)[0];
    *out_len = hyp.size();
    for (size_t i = 0; i < std::min(capacity, hyp.size()); ++i) out[i] = hyp[i];
  });
}

wd_status wd_corpus_generate(const char* task, size_t n, size_t min_len, size_t max_len, size_t vocab, uint64_t seed,
                             wd_corpus** out) {
  if (!task || !out) return fail(WD_ERR_INVALID_ARGUMENT, "task and out must be non-null");
  *out = nullptr;
  return guarded([&] {
    auto c = std::make_unique<wd_corpus>();
    c->corpus = wdistill::gen_synthetic(wdistill::task_from_name(task), n, min_len, max_len, vocab, seed);
    *out = c.release();
  });
}

wd_status wd_corpus_load_tsv(const char* path, size_t vocab, wd_corpus** out) {
  if (!path || !out) return fail(WD_ERR_INVALID_ARGUMENT, "path and out must be non-null");
  *out = nullptr;
  return guarded([&] {
    auto c = std::make_unique<wd_corpus>();
    c->corpus = wdistill::load_tsv(path, vocab);
    *out = c.release();
  });
}

wd_status wd_corpus_save_tsv(const wd_corpus* corpus, const char* path) {
  if (!corpus || !path) return fail(WD_ERR_INVALID_ARGUMENT, "corpus and path must be non-null");
  return guarded([&] { wdistill::save_tsv(path, corpus->corpus); });
}

wd_status wd_corpus_size(const wd_corpus* corpus, size_t* out) {
  if (!corpus || !out) return fail(WD_ERR_INVALID_ARGUMENT, "corpus and out must be non-null");
  *out = corpus->corpus.size();
  last_error.clear();
  return WD_OK;
}

void wd_corpus_free(wd_corpus* corpus) { delete corpus; }

wd_status wd_evaluate(const wd_model* model, const wd_corpus* corpus, char** report_json) {
  if (!model || !corpus || !report_json) return fail(WD_ERR_INVALID_ARGUMENT, "null pointer argument");
  return guarded([&] {
    const auto r = wdistill::evaluate(model->saved.params, model->saved.config, corpus->corpus);
    *report_json = dup_string(r.to_json().dump(2));
  });
}

wd_status wd_corpus_bleu(const int32_t* const* hyps, const size_t* hyp_lens, const int32_t* const* refs,
                         const size_t* ref_lens, size_t n, double* out) {
  if (!out || (n && (!hyps || !hyp_lens || !refs || !ref_lens))) {
    return fail(WD_ERR_INVALID_ARGUMENT, "null pointer argument");
  }
  return guarded([&] {
    std::vector<std::vector<int>> h(n), r(n);
    for (size_t i = 0; i < n; ++i) {
      if ((hyp_lens[i] && !hyps[i]) || (ref_lens[i] && !refs[i])) throw wdistill::ShapeError("null sentence");
      h[i].assign(hyps[i], hyps[i] + hyp_lens[i]);
      r[i].assign(refs[i], refs[i] + ref_lens[i]);
    }
    *out = wdistill::corpus_bleu(h, r);
  });
}

wd_status wd_file_digest(const char* path, char** hex) {
  if (!path || !hex) return fail(WD_ERR_INVALID_ARGUMENT, "path and hex must be non-null");
  return guarded([&] { *hex = dup_string(wdistill::file_digest(path)); });
}

}  // extern "C"
