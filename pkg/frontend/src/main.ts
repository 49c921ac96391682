import { EditingClient } from "./api.js";
import { EditorView } from "./ui.js";

const root = document.getElementById("app");
if (root) {
  const view = new EditorView(root, new EditingClient(""));
  void view.start();
}
