import { SurveyApi } from './api.js';
import { SurveyApp } from './app.js';

const root = document.getElementById('app');
if (!root) {
  throw new Error('missing #app mount point');
}
const app = new SurveyApp(new SurveyApi(''), root);
void app.start();
