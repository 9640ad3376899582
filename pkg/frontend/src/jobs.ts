import { ApiClient, JobPayload } from "./api.js";

/** Poll a job until it reaches a terminal state; resolves on done, rejects on failed. */
export function pollJob(api: ApiClient, jobId: string, intervalMs = 500): Promise<JobPayload> {
  return new Promise((resolve, reject) => {
    const tick = async () => {
      let job: JobPayload;
      try {
        job = await api.getJob(jobId);
      } catch (err) {
        reject(err);
        return;
      }
      if (job.status === "done") {
        resolve(job);
      } else if (job.status === "failed") {
        reject(new Error(job.error ?? "job failed"));
      } else {
        setTimeout(tick, intervalMs);
      }
    };
    void tick();
  });
}
