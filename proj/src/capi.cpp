// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#include "proxlab/proxlab.h"

#include <string>

#include "commands.hpp"

struct proxlab_job {
  std::string command;
  std::string config_json;
  std::string error;
  std::string summary;
  proxlab_status status = PROXLAB_OK;
  bool ran = false;
};

extern "C" {

proxlab_status proxlab_job_create(const char* command, const char* config_json,
                                  proxlab_job** out) {
  if (out == nullptr) return PROXLAB_ERR_CONFIG;
  *out = nullptr;
  if (command == nullptr) return PROXLAB_ERR_CONFIG;
  auto* job = new (std::nothrow) proxlab_job;
  if (job == nullptr) return PROXLAB_ERR_RUNTIME;
  job->command = command;
  job->config_json = config_json ? config_json : "";
  *out = job;
  return PROXLAB_OK;
}

proxlab_status proxlab_job_run(proxlab_job* job) {
  if (job == nullptr) return PROXLAB_ERR_CONFIG;
  if (job->ran) {
    job->status = PROXLAB_ERR_RUNTIME;
    job->error = "job already ran";
    return job->status;
  }
  job->ran = true;
  try {
    proxlab::CommandResult res =
        proxlab::run_command(job->command, job->config_json);
    job->error = res.error;
    job->summary = res.summary_json;
    switch (res.status) {
      case 0: job->status = PROXLAB_OK; break;
      case 2: job->status = PROXLAB_ERR_CONFIG; break;
      case 3: job->status = PROXLAB_ERR_MISSING_INPUT; break;
      default: job->status = PROXLAB_ERR_RUNTIME; break;
    }
  } catch (const std::exception& e) {
    job->status = PROXLAB_ERR_RUNTIME;
    job->error = e.what();
  } catch (...) {
    job->status = PROXLAB_ERR_RUNTIME;
    job->error = "unknown error";
  }
  return job->status;
}

const char* proxlab_job_error(const proxlab_job* job) {
  return job ? job->error.c_str() : "null job";
}

const char* proxlab_job_summary_json(const proxlab_job* job) {
  return job ? job->summary.c_str() : "";
}

proxlab_status proxlab_job_status(const proxlab_job* job) {
  return job ? job->status : PROXLAB_ERR_CONFIG;
}

void proxlab_job_free(proxlab_job* job) { delete job; }

const char* proxlab_version(void) { return "0.1.0"; }

}  // extern "C"
