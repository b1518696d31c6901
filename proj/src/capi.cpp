#include "pcp/pcp.h"

#include <exception>
#include <string>

#include "pcp/error.hpp"
#include "pcp/io.hpp"
#include "pcp/log.hpp"
#include "pcp/metrics.hpp"
#include "pcp/pipeline.hpp"

struct pcp_session {
  std::string report;
  std::string resolved;
};

struct pcp_sdf {
  pcp::GlobalSdf sdf;
};

namespace {

thread_local std::string g_last_error;

pcp_status status_of(pcp::ErrorKind k) {
  switch (k) {
    case pcp::ErrorKind::Usage: return PCP_ERR_USAGE;
    case pcp::ErrorKind::Data: return PCP_ERR_DATA;
    case pcp::ErrorKind::Numeric: return PCP_ERR_NUMERIC;
  }
  return PCP_ERR_INTERNAL;
}

template <typename F>
pcp_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return PCP_OK;
  } catch (const pcp::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return PCP_ERR_INTERNAL;
}

pcp::Json parse_options(const char* options_json) {
  if (!options_json || !*options_json) return pcp::Json::object();
  return pcp::parse_json(options_json, "options");
}

}  // namespace

extern "C" {

const char* pcp_version(void) { return pcp::kVersion; }

void pcp_set_log_level(pcp_log_level level) { pcp::log::set_level(static_cast<pcp::log::Level>(level)); }

const char* pcp_last_error(void) { return g_last_error.c_str(); }

pcp_status pcp_session_create(pcp_session** out) {
  if (!out) return PCP_ERR_USAGE;
  return guarded([&] { *out = new pcp_session(); });
}

void pcp_session_destroy(pcp_session* session) { delete session; }

pcp_status pcp_run(pcp_session* session, const char* command, const char* options_json, int* exit_code) {
  if (!session || !command) {
    g_last_error = "pcp_run: null session or command";
    return PCP_ERR_USAGE;
  }
  session->report.clear();
  return guarded([&] {
    auto r = pcp::run_command(command, parse_options(options_json));
    session->report = std::move(r.report);
    if (exit_code) *exit_code = r.exit_code;
  });
}

const char* pcp_session_report(const pcp_session* session) { return session ? session->report.c_str() : ""; }

pcp_status pcp_resolve_options(pcp_session* session, const char* command, const char* options_json,
                               const char** resolved_json) {
  if (!session || !command || !resolved_json) {
    g_last_error = "pcp_resolve_options: null argument";
    return PCP_ERR_USAGE;
  }
  return guarded([&] {
    session->resolved = pcp::resolve_options(command, parse_options(options_json)).dump(2);
    *resolved_json = session->resolved.c_str();
  });
}

pcp_status pcp_sdf_load(const char* path, pcp_sdf** out) {
  if (!path || !out) {
    g_last_error = "pcp_sdf_load: null argument";
    return PCP_ERR_USAGE;
  }
  return guarded([&] { *out = new pcp_sdf{pcp::io::load_global_sdf(path)}; });
}

void pcp_sdf_free(pcp_sdf* sdf) { delete sdf; }

int pcp_sdf_dim(const pcp_sdf* sdf) { return sdf ? sdf->sdf.arch.dim : 0; }

pcp_status pcp_sdf_eval(const pcp_sdf* sdf, const double* points, size_t n, double* values) {
  if (!sdf || (n > 0 && (!points || !values))) {
    g_last_error = "pcp_sdf_eval: null argument";
    return PCP_ERR_USAGE;
  }
  return guarded([&] {
    const int d = sdf->sdf.arch.dim;
    pcp::Matrix q = Eigen::Map<const pcp::Matrix>(points, static_cast<Eigen::Index>(n), d);
    const pcp::Vector v = sdf->sdf.eval(q);
    for (size_t i = 0; i < n; ++i) values[i] = v(static_cast<Eigen::Index>(i));
  });
}

pcp_status pcp_chamfer(const double* x, size_t nx, const double* y, size_t ny, int dim, int order, double* out) {
  if (!x || !y || !out || dim < 1) {
    g_last_error = "pcp_chamfer: null argument or bad dimension";
    return PCP_ERR_USAGE;
  }
  return guarded([&] {
    const pcp::Matrix a = Eigen::Map<const pcp::Matrix>(x, static_cast<Eigen::Index>(nx), dim);
    const pcp::Matrix b = Eigen::Map<const pcp::Matrix>(y, static_cast<Eigen::Index>(ny), dim);
    *out = pcp::chamfer(a, b, order);
  });
}

}  // extern "C"
