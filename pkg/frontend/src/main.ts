import { ApiClient } from "./api.js";
import { DashboardModel } from "./model.js";
import { bind } from "./dom.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? "http://127.0.0.1:8787";

const api = new ApiClient(base);
const model = new DashboardModel(api);
const render = bind(model);

api
  .health()
  .then(() => {
    model.serviceDown = false;
    render();
  })
  .catch(() => {
    model.serviceDown = true;
    render();
  });
